#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pamda/data/dataset.hpp"
#include "pamda/disc/discrepancy.hpp"
#include "pamda/errors.hpp"
#include "pamda/model/model.hpp"
#include "pamda/proto/protobank.hpp"

namespace pamda::train {

using data::Batch;
using data::MultiDomainDataset;
using diffcore::Graph;
using diffcore::Var;
using model::ModelParams;
using proto::PrototypeBank;

struct AblationFlags {
  bool use_dc = true;
  bool use_dd = true;
  bool use_proto_cls = true;
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t rounds = 30;
  std::size_t iters_per_round = 20;
  double learning_rate = 0.05;
  double eta = 0.7;
  double tau_c = 0.1;
  double tau_d = 10.0;
  std::uint64_t seed = 0;
  AblationFlags ablation;
  proto::DivisorMode divisor_mode = proto::DivisorMode::ClusterSize;
  bool normalize_by_k = true;
  disc::KernelSpec kernel = disc::KernelSpec::median();
  /// Replaces the adaptive threshold when set (diagnostics only).
  std::optional<double> gamma_override;
  std::vector<std::size_t> hidden_dims{16, 16};
  std::size_t embedding_dim = 8;
  std::size_t classifier_hidden = 16;

  /// Throws ConfigError on rounds < 1, m < 2, non-positive rates or
  /// temperatures, or eta outside [0, 1).
  void validate() const;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t round = 0;
  double loss_source = 0.0;
  std::optional<double> loss_proto;  // absent when disabled or skipped
  double loss_cls = 0.0;
  std::optional<double> d_class;     // absent when disabled or skipped
  std::optional<double> d_domain;
  double d_total = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  double source_accuracy = 0.0;
  std::size_t n_high = 0;
  std::size_t n_low = 0;
  bool d_class_skipped = false;  // enabled but no usable high-confidence sample
  bool d_domain_skipped = false; // enabled but no low-confidence sample
  double sigma = 0.0;
  std::optional<disc::ClassWeights> class_weights;
  std::optional<disc::DomainWeights> domain_weights;
};

struct TrainReport {
  TrainConfig config;
  std::vector<IterationRecord> iterations;
  std::vector<double> round_accuracy;  // empty when target labels are absent
  std::optional<std::string> fault;
};

/// A non-finite loss during training. Carries the offending record and the
/// report accumulated so far.
class TrainingFault : public NumericFault {
 public:
  TrainingFault(const std::string& what, IterationRecord record)
      : NumericFault(what), record(std::move(record)) {}
  IterationRecord record;
  std::shared_ptr<TrainReport> partial;
};

struct TrainState {
  ModelParams params;
  PrototypeBank bank;
  std::vector<data::BatchSampler> samplers;  // N sources then the target
  std::size_t iteration = 0;
};

TrainState init_state(const TrainConfig& config, const MultiDomainDataset& dataset);

/// Mean over domains of the mean cross-entropy of each labeled batch.
/// `logits[j]` are F(G(x)) for the rows of `batches[j]`.
Var source_classification_loss(std::span<const Var> logits, std::span<const Batch> batches);

/// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);

struct PrototypeLoss {
  Var value;
  bool skipped = true;
};

/// Cross-entropy of F on every initialized prototype labeled by its class:
/// mean over source slots plus mean over target slots. Prototypes enter as
/// constants, so only F receives gradient.
PrototypeLoss prototype_classification_loss(Graph& graph, const model::BoundModel& model,
                                            const PrototypeBank& bank);

/// 2 / (1 + exp(-10 t / max_round)) - 1.
double alpha_schedule(std::size_t round, std::size_t max_round);

/// Everything an iteration freezes before differentiation: the sampled
/// batches, the confidence split, the prototype bank after its momentum
/// update, the kernel bandwidth and the detached similarity weights.
struct StepContext {
  std::vector<Batch> source_batches;
  Batch target_batch;
  proto::ConfidenceSplit split;
  PrototypeBank bank;
  double source_accuracy = 0.0;
  double sigma = 1.0;
  bool d_class_active = false;
  bool d_domain_active = false;
  std::optional<disc::ClassWeights> class_weights;
  std::optional<disc::DomainWeights> domain_weights;
};

/// Steps (1)-(5) of an iteration plus the detached quantities of step (6).
/// Advances the samplers and updates `state.bank`.
StepContext prepare_step(TrainState& state, const MultiDomainDataset& dataset,
                         const TrainConfig& config);

struct StepObjective {
  model::BoundModel model;
  Var loss_source;
  PrototypeLoss loss_proto;
  Var loss_cls;
  Var d_class;
  Var d_domain;
  Var d_total;
  bool d_class_used = false;
  bool d_domain_used = false;
};

/// Builds every differentiable quantity of one iteration for `params`
/// against a frozen context.
StepObjective build_objective(Graph& graph, const ModelParams& params, const StepContext& context,
                              const TrainConfig& config);

/// G <- G - lr * (dL_cls/dG + alpha * dD/dG), F <- F - lr * dL_cls/dF, both
/// gradients taken at the same parameters.
ModelParams apply_gradients(const ModelParams& params, const model::BoundModel& bound,
                            const diffcore::Gradients& cls_grads,
                            const diffcore::Gradients* disc_grads, double alpha,
                            double learning_rate);

/// One iteration: sample, forward, pseudo-label, update prototypes, build
/// the losses and apply the simultaneous G/F gradient step.
IterationRecord train_step(TrainState& state, const MultiDomainDataset& dataset,
                           const TrainConfig& config, double alpha);

/// Fraction of target samples whose arg-max prediction matches the label.
double evaluate(const ModelParams& params, const MultiDomainDataset& dataset);

struct ExperimentResult {
  TrainReport report;
  ModelParams params;
  PrototypeBank bank;
};

ExperimentResult run_experiment(const TrainConfig& config, const MultiDomainDataset& dataset);

}  // namespace pamda::train
