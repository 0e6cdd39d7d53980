#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pamda/diffcore/graph.hpp"

namespace pamda::model {

using diffcore::Graph;
using diffcore::Tensor;
using diffcore::Var;

/// y = x W + b with W stored fan_in x fan_out and b as a 1 x fan_out row.
struct DenseLayer {
  Tensor weight;
  Tensor bias;

  std::size_t fan_in() const { return weight.rows(); }
  std::size_t fan_out() const { return weight.cols(); }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Feature extractor G (tanh after every layer, so embeddings lie in
/// (-1, 1)^d) and a two-layer classifier F producing K logits.
struct ModelParams {
  std::vector<DenseLayer> extractor;
  std::array<DenseLayer, 2> classifier;

  std::size_t input_dim() const { return extractor.front().fan_in(); }
  std::size_t embedding_dim() const { return extractor.back().fan_out(); }
  int num_classes() const { return static_cast<int>(classifier[1].fan_out()); }

  /// Throws ContractViolation when layer shapes do not chain or a value is
  /// non-finite.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct Architecture {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden{16, 16};
  std::size_t embedding_dim = 8;
  std::size_t classifier_hidden = 16;
  int num_classes = 2;
};

/// Weights ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)), biases zero.
ModelParams init_model(const Architecture& arch, std::uint64_t seed);

/// Parameter leaves for one model inside a graph.
struct BoundModel {
  struct Layer {
    Var weight;
    Var bias;
  };
  std::vector<Layer> extractor;
  std::array<Layer, 2> classifier;
};

BoundModel bind_parameters(Graph& graph, const ModelParams& params);

Var extract_features(const BoundModel& model, Var inputs);
Var classify(const BoundModel& model, Var embeddings);
Var predict_probs(const BoundModel& model, Var inputs);

// Graph-free evaluation helpers.
Tensor extract_features(const ModelParams& params, const Tensor& inputs);
Tensor classify(const ModelParams& params, const Tensor& embeddings);
Tensor predict_probs(const ModelParams& params, const Tensor& inputs);
std::vector<int> predict_labels(const ModelParams& params, const Tensor& inputs);

// Checkpoint text format, see README. Values use shortest round-trip
// decimal text so save/load is bit-exact.
std::string to_checkpoint_text(const ModelParams& params);
ModelParams from_checkpoint_text(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace pamda::model
