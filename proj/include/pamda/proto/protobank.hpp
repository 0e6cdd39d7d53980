#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "pamda/data/dataset.hpp"
#include "pamda/diffcore/tensor.hpp"

namespace pamda::proto {

using data::DomainId;
using diffcore::Tensor;

/// How a batch class centroid is normalized: by the number of samples in the
/// class cluster (a true mean) or by the full batch size m.
enum class DivisorMode { ClusterSize, BatchSize };

struct BatchCentroids {
  Tensor centroids;           // K x d; rows of absent classes are zero
  std::vector<bool> present;  // class had at least one sample
};

BatchCentroids batch_class_centroids(const Tensor& embeddings, std::span<const int> labels,
                                     int num_classes, DivisorMode mode = DivisorMode::ClusterSize);

/// Momentum-maintained class prototypes for every (source, class) pair and
/// for every target class. Stored values are plain buffers, never graph
/// nodes. Reading a slot that was never written throws StateError.
class PrototypeBank {
 public:
  PrototypeBank(std::size_t num_sources, int num_classes, std::size_t dim, double eta = 0.7);

  std::size_t num_sources() const { return num_sources_; }
  int num_classes() const { return num_classes_; }
  std::size_t dim() const { return dim_; }
  double eta() const { return eta_; }

  bool initialized(DomainId domain, int k) const;
  bool all_sources_initialized(int k) const;
  bool all_sources_initialized() const;
  bool any_initialized() const;

  std::span<const double> prototype(DomainId domain, int k) const;

  /// Slot ← eta * slot + (1 - eta) * centroid for present classes; the first
  /// write to a slot copies the centroid.
  void momentum_update(DomainId domain, const BatchCentroids& batch);

  /// Overwrites a slot and marks it initialized (checkpoint restore).
  void restore(DomainId domain, int k, std::span<const double> values);

  /// Raw slot contents regardless of initialization, for dumps.
  std::span<const double> raw_slot(DomainId domain, int k) const;

  friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;

 private:
  std::size_t slot_index(DomainId domain, int k) const;

  std::size_t num_sources_;
  int num_classes_;
  std::size_t dim_;
  double eta_;
  std::vector<double> slots_;       // (N + 1) * K * d; target slots last
  std::vector<bool> initialized_;   // (N + 1) * K
};

/// gamma = 1 / (1 + exp(-3 C)) for source accuracy C in [0, 1].
double adaptive_threshold(double source_accuracy);

struct PseudoLabels {
  std::vector<int> labels;
  std::vector<double> confidences;
};

/// Highest-probability class per row (smallest index on ties) and that
/// probability as the confidence.
PseudoLabels assign_pseudo_labels(const Tensor& probs);

struct ConfidenceSplit {
  struct Confident {
    std::size_t row;
    int label;
    double confidence;
  };
  std::vector<Confident> high;  // confidence >= gamma
  std::vector<std::size_t> low;
  double gamma = 0.0;
};

ConfidenceSplit split_by_confidence(const PseudoLabels& pseudo, double gamma);

/// CSV with header `domain,class,dim_1..dim_d,initialized`.
void write_prototype_csv(const std::filesystem::path& path, const PrototypeBank& bank);

}  // namespace pamda::proto
