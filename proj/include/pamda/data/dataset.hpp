#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pamda/diffcore/tensor.hpp"

namespace pamda::data {

using diffcore::Tensor;

/// Identifies one domain of a dataset: source j or the target.
struct DomainId {
  enum class Kind { Source, Target };
  Kind kind = Kind::Source;
  std::size_t index = 0;

  static DomainId source(std::size_t j) { return {Kind::Source, j}; }
  static DomainId target() { return {Kind::Target, 0}; }
  bool is_target() const { return kind == Kind::Target; }
  std::string name() const;
  friend bool operator==(const DomainId&, const DomainId&) = default;
};

/// Features (one sample per row) plus class labels in [0, K).
struct LabeledSamples {
  Tensor features;
  std::vector<int> labels;
};

/// Marker passed to the evaluation-only label accessor. Every use is counted
/// so tests can assert training never touched target labels.
struct EvaluationAccess {
  explicit EvaluationAccess() = default;
};

/// N >= 2 labeled sources and one target whose labels, when present, are
/// reachable only through target_labels(EvaluationAccess).
class MultiDomainDataset {
 public:
  MultiDomainDataset(std::vector<LabeledSamples> sources, Tensor target_features,
                     std::optional<std::vector<int>> target_labels, int num_classes);

  std::size_t num_sources() const { return sources_.size(); }
  int num_classes() const { return num_classes_; }
  std::size_t input_dim() const { return target_features_.cols(); }

  const LabeledSamples& source(std::size_t j) const { return sources_.at(j); }
  const Tensor& target_features() const { return target_features_; }
  std::size_t domain_size(DomainId domain) const;
  const Tensor& features(DomainId domain) const;

  bool has_target_labels() const { return target_labels_.has_value(); }
  const std::vector<int>& target_labels(EvaluationAccess) const;
  std::size_t evaluation_access_count() const { return access_count_->load(); }

  /// Same samples, same labels; access counters are not compared.
  friend bool operator==(const MultiDomainDataset& a, const MultiDomainDataset& b);

 private:
  std::vector<LabeledSamples> sources_;
  Tensor target_features_;
  std::optional<std::vector<int>> target_labels_;
  int num_classes_ = 0;
  std::shared_ptr<std::atomic<std::size_t>> access_count_ =
      std::make_shared<std::atomic<std::size_t>>(0);
};

struct Batch {
  DomainId domain;
  Tensor features;                        // m x D_in
  std::optional<std::vector<int>> labels; // absent for target batches
  std::vector<std::size_t> indices;       // rows of the domain that were drawn
};

/// Shuffle-then-chunk sampler over one domain. Each epoch is a fresh
/// permutation; batches are consecutive chunks of it and a tail shorter than
/// m is dropped.
class BatchSampler {
 public:
  BatchSampler(std::size_t domain_size, std::uint64_t seed);

  std::vector<std::size_t> next_indices(std::size_t m);
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

Batch sample_batch(const MultiDomainDataset& dataset, DomainId domain, std::size_t m,
                   BatchSampler& sampler);

}  // namespace pamda::data
