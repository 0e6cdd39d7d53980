#include "pamda/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "pamda/format.hpp"

namespace pamda::train {

using data::DomainId;
using diffcore::Tensor;

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

constexpr std::uint32_t kModelStream = 0x9E3779B9u;

Tensor select_rows(const Tensor& all, std::span<const std::size_t> rows) {
  Tensor out(rows.size(), all.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = all.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

int argmax_row(const Tensor& t, std::size_t r) {
  auto row = t.row(r);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

Tensor update_tensor(const Tensor& value, const Tensor& grad, const Tensor* extra, double alpha,
                     double lr) {
  Tensor out = value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double g = grad[i];
    if (extra != nullptr) g += alpha * (*extra)[i];
    out[i] -= lr * g;
  }
  return out;
}

const Tensor& grad_for(const diffcore::Gradients& grads, Var v) {
  auto it = grads.find(v.id());
  if (it == grads.end()) throw ContractViolation("missing gradient for parameter node");
  return it->second;
}

}  // namespace

void TrainConfig::validate() const {
  if (rounds < 1) throw ConfigError("rounds must be at least 1");
  if (iters_per_round < 1) throw ConfigError("iters_per_round must be at least 1");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(eta >= 0.0 && eta < 1.0)) throw ConfigError("eta must lie in [0, 1)");
  if (!(tau_c > 0.0) || !(tau_d > 0.0)) throw ConfigError("temperatures must be positive");
  if (kernel.sigma && !(*kernel.sigma > 0.0)) throw ConfigError("kernel sigma must be positive");
  if (gamma_override && !std::isfinite(*gamma_override)) {
    throw ConfigError("gamma_override must be finite");
  }
  if (embedding_dim == 0 || classifier_hidden == 0 ||
      std::any_of(hidden_dims.begin(), hidden_dims.end(), [](std::size_t h) { return h == 0; })) {
    throw ConfigError("layer widths must be positive");
  }
}

TrainState init_state(const TrainConfig& config, const MultiDomainDataset& dataset) {
  config.validate();
  model::Architecture arch;
  arch.input_dim = dataset.input_dim();
  arch.hidden = config.hidden_dims;
  arch.embedding_dim = config.embedding_dim;
  arch.classifier_hidden = config.classifier_hidden;
  arch.num_classes = dataset.num_classes();

  const std::size_t N = dataset.num_sources();
  std::vector<data::BatchSampler> samplers;
  for (std::size_t j = 0; j <= N; ++j) {
    const DomainId domain = j < N ? DomainId::source(j) : DomainId::target();
    const std::size_t size = dataset.domain_size(domain);
    if (config.batch_size > size) {
      throw ConfigError("batch_size " + std::to_string(config.batch_size) + " exceeds size of " +
                        domain.name() + " (" + std::to_string(size) + ")");
    }
    samplers.emplace_back(size, derive_seed(config.seed, static_cast<std::uint32_t>(j)));
  }
  return TrainState{model::init_model(arch, derive_seed(config.seed, kModelStream)),
                    PrototypeBank(N, dataset.num_classes(), config.embedding_dim, config.eta),
                    std::move(samplers), 0};
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (labels.size() != z.rows()) throw ContractViolation("cross_entropy: label count mismatch");
  Tensor onehot(z.rows(), z.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= z.cols()) {
      throw ContractViolation("cross_entropy: label " + std::to_string(labels[i] + 1) +
                              " out of range");
    }
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  Graph& g = logits.graph();
  Var log_probs = diffcore::log(diffcore::softmax_rows(logits));
  Var picked = diffcore::sum(diffcore::multiply(log_probs, g.constant(std::move(onehot))));
  return diffcore::scale(picked, -1.0 / static_cast<double>(labels.size()));
}

Var source_classification_loss(std::span<const Var> logits, std::span<const Batch> batches) {
  if (logits.size() != batches.size() || batches.empty()) {
    throw ContractViolation("source_classification_loss: one logits matrix per batch required");
  }
  std::vector<Var> per_domain;
  for (std::size_t j = 0; j < batches.size(); ++j) {
    if (!batches[j].labels) throw ContractViolation("source batch without labels");
    per_domain.push_back(cross_entropy(logits[j], *batches[j].labels));
  }
  return diffcore::mean(diffcore::concat_rows(per_domain));
}

PrototypeLoss prototype_classification_loss(Graph& graph, const model::BoundModel& model,
                                            const PrototypeBank& bank) {
  auto term = [&](bool target) -> std::optional<Var> {
    std::vector<double> rows;
    std::vector<int> labels;
    const std::size_t n_domains = target ? 1 : bank.num_sources();
    for (std::size_t j = 0; j < n_domains; ++j) {
      const DomainId domain = target ? DomainId::target() : DomainId::source(j);
      for (int k = 0; k < bank.num_classes(); ++k) {
        if (!bank.initialized(domain, k)) continue;
        auto p = bank.prototype(domain, k);
        rows.insert(rows.end(), p.begin(), p.end());
        labels.push_back(k);
      }
    }
    if (labels.empty()) return std::nullopt;
    Var protos = graph.constant(Tensor(labels.size(), bank.dim(), std::move(rows)));
    return cross_entropy(model::classify(model, protos), labels);
  };
  auto source = term(false);
  auto target = term(true);
  if (source && target) return {diffcore::add(*source, *target), false};
  if (source) return {*source, false};
  if (target) return {*target, false};
  return {graph.constant(Tensor::scalar(0.0)), true};
}

double alpha_schedule(std::size_t round, std::size_t max_round) {
  if (max_round == 0 || round > max_round) {
    throw ContractViolation("alpha_schedule: round " + std::to_string(round) +
                            " outside [0, " + std::to_string(max_round) + "]");
  }
  const double t = static_cast<double>(round) / static_cast<double>(max_round);
  return 2.0 / (1.0 + std::exp(-10.0 * t)) - 1.0;
}

StepContext prepare_step(TrainState& state, const MultiDomainDataset& dataset,
                         const TrainConfig& config) {
  const std::size_t N = dataset.num_sources();
  const int K = dataset.num_classes();
  const std::size_t m = config.batch_size;
  if (state.samplers.size() != N + 1) throw ContractViolation("sampler count mismatch");

  StepContext ctx{.source_batches = {},
                  .target_batch = {},
                  .split = {},
                  .bank = state.bank,
                  .source_accuracy = 0.0,
                  .sigma = 1.0,
                  .d_class_active = false,
                  .d_domain_active = false,
                  .class_weights = std::nullopt,
                  .domain_weights = std::nullopt};
  for (std::size_t j = 0; j < N; ++j) {
    ctx.source_batches.push_back(
        data::sample_batch(dataset, DomainId::source(j), m, state.samplers[j]));
  }
  ctx.target_batch = data::sample_batch(dataset, DomainId::target(), m, state.samplers[N]);

  std::size_t correct = 0;
  for (std::size_t j = 0; j < N; ++j) {
    const auto& batch = ctx.source_batches[j];
    const Tensor emb = model::extract_features(state.params, batch.features);
    const Tensor logits = model::classify(state.params, emb);
    for (std::size_t i = 0; i < m; ++i) {
      if (argmax_row(logits, i) == (*batch.labels)[i]) ++correct;
    }
    state.bank.momentum_update(
        DomainId::source(j),
        proto::batch_class_centroids(emb, *batch.labels, K, config.divisor_mode));
  }
  ctx.source_accuracy = static_cast<double>(correct) / static_cast<double>(N * m);
  const double gamma = config.gamma_override.value_or(proto::adaptive_threshold(ctx.source_accuracy));

  const Tensor target_emb = model::extract_features(state.params, ctx.target_batch.features);
  Graph probe;
  const Tensor probs =
      diffcore::softmax_rows(probe.constant(model::classify(state.params, target_emb))).value();
  ctx.split = proto::split_by_confidence(proto::assign_pseudo_labels(probs), gamma);

  // Target prototypes always use the true per-class mean of the confident rows.
  proto::BatchCentroids target_centroids{Tensor(static_cast<std::size_t>(K), config.embedding_dim),
                                         std::vector<bool>(static_cast<std::size_t>(K), false)};
  if (!ctx.split.high.empty()) {
    std::vector<std::size_t> rows;
    std::vector<int> labels;
    for (const auto& c : ctx.split.high) {
      rows.push_back(c.row);
      labels.push_back(c.label);
    }
    target_centroids = proto::batch_class_centroids(select_rows(target_emb, rows), labels, K,
                                                    proto::DivisorMode::ClusterSize);
    state.bank.momentum_update(DomainId::target(), target_centroids);
  }
  ctx.bank = state.bank;

  if (config.ablation.use_dc && !ctx.split.high.empty()) {
    proto::BatchCentroids usable = target_centroids;
    bool any = false;
    for (int k = 0; k < K; ++k) {
      usable.present[k] = usable.present[k] && ctx.bank.all_sources_initialized(k);
      any = any || usable.present[k];
    }
    if (any) {
      ctx.class_weights = disc::class_similarity_weights(ctx.bank, usable, config.tau_c);
      ctx.d_class_active = true;
    }
  }
  if (config.ablation.use_dd && !ctx.split.low.empty() && ctx.bank.all_sources_initialized()) {
    const Tensor low_emb = select_rows(target_emb, ctx.split.low);
    std::vector<double> v_target(low_emb.cols(), 0.0);
    for (std::size_t r = 0; r < low_emb.rows(); ++r) {
      for (std::size_t c = 0; c < low_emb.cols(); ++c) v_target[c] += low_emb(r, c);
    }
    for (double& v : v_target) v /= static_cast<double>(low_emb.rows());
    ctx.domain_weights =
        disc::domain_similarity_weights(disc::domain_prototypes(ctx.bank), v_target, config.tau_d);
    ctx.d_domain_active = true;
  }

  if (ctx.d_class_active || ctx.d_domain_active) {
    std::vector<double> points;
    std::size_t count = 0;
    for (std::size_t j = 0; j < N; ++j) {
      for (int k = 0; k < K; ++k) {
        if (!ctx.bank.initialized(DomainId::source(j), k)) continue;
        auto p = ctx.bank.prototype(DomainId::source(j), k);
        points.insert(points.end(), p.begin(), p.end());
        ++count;
      }
    }
    auto emb = target_emb.data();
    points.insert(points.end(), emb.begin(), emb.end());
    count += target_emb.rows();
    ctx.sigma = disc::resolve_bandwidth(Tensor(count, config.embedding_dim, std::move(points)),
                                        config.kernel);
  }
  return ctx;
}

StepObjective build_objective(Graph& graph, const ModelParams& params, const StepContext& ctx,
                              const TrainConfig& config) {
  StepObjective obj;
  obj.model = model::bind_parameters(graph, params);

  std::vector<Var> logits;
  for (const auto& batch : ctx.source_batches) {
    Var emb = model::extract_features(obj.model, graph.constant(batch.features));
    logits.push_back(model::classify(obj.model, emb));
  }
  obj.loss_source = source_classification_loss(logits, ctx.source_batches);
  obj.loss_proto = config.ablation.use_proto_cls
                       ? prototype_classification_loss(graph, obj.model, ctx.bank)
                       : PrototypeLoss{graph.constant(Tensor::scalar(0.0)), true};
  obj.loss_cls = diffcore::add(obj.loss_source, obj.loss_proto.value);

  obj.d_class = graph.constant(Tensor::scalar(0.0));
  obj.d_domain = graph.constant(Tensor::scalar(0.0));
  if (ctx.d_class_active || ctx.d_domain_active) {
    Var target_emb = model::extract_features(obj.model, graph.constant(ctx.target_batch.features));
    auto row = [&](std::size_t r) { return diffcore::slice_rows(target_emb, r, r + 1); };

    if (ctx.d_class_active) {
      const auto& weights = *ctx.class_weights;
      std::vector<std::vector<Var>> groups(static_cast<std::size_t>(ctx.bank.num_classes()));
      for (const auto& c : ctx.split.high) {
        if (weights.present[c.label]) groups[c.label].push_back(row(c.row));
      }
      auto dc = disc::class_aggregation_discrepancy(graph, ctx.bank, weights, groups, ctx.sigma);
      if (!dc.empty) {
        obj.d_class = dc.total;
        obj.d_class_used = true;
      }
    }
    if (ctx.d_domain_active) {
      std::vector<Var> rows;
      for (std::size_t r : ctx.split.low) rows.push_back(row(r));
      auto dd = disc::domain_aggregation_discrepancy(graph, ctx.bank, *ctx.domain_weights, rows,
                                                     ctx.sigma, config.normalize_by_k);
      if (!dd.skipped) {
        obj.d_domain = dd.value;
        obj.d_domain_used = true;
      }
    }
  }
  obj.d_total = disc::total_discrepancy(obj.d_class, obj.d_domain);
  return obj;
}

ModelParams apply_gradients(const ModelParams& params, const model::BoundModel& bound,
                            const diffcore::Gradients& cls_grads,
                            const diffcore::Gradients* disc_grads, double alpha,
                            double learning_rate) {
  ModelParams next = params;
  for (std::size_t i = 0; i < params.extractor.size(); ++i) {
    const auto& b = bound.extractor[i];
    const Tensor* dw = disc_grads ? &grad_for(*disc_grads, b.weight) : nullptr;
    const Tensor* db = disc_grads ? &grad_for(*disc_grads, b.bias) : nullptr;
    next.extractor[i].weight = update_tensor(params.extractor[i].weight,
                                             grad_for(cls_grads, b.weight), dw, alpha,
                                             learning_rate);
    next.extractor[i].bias = update_tensor(params.extractor[i].bias, grad_for(cls_grads, b.bias),
                                           db, alpha, learning_rate);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& b = bound.classifier[i];
    next.classifier[i].weight = update_tensor(params.classifier[i].weight,
                                              grad_for(cls_grads, b.weight), nullptr, 0.0,
                                              learning_rate);
    next.classifier[i].bias = update_tensor(params.classifier[i].bias,
                                            grad_for(cls_grads, b.bias), nullptr, 0.0,
                                            learning_rate);
  }
  return next;
}

IterationRecord train_step(TrainState& state, const MultiDomainDataset& dataset,
                           const TrainConfig& config, double alpha) {
  StepContext ctx = prepare_step(state, dataset, config);
  Graph graph;
  StepObjective obj = build_objective(graph, state.params, ctx, config);

  IterationRecord rec;
  rec.iteration = state.iteration;
  rec.loss_source = obj.loss_source.value().item();
  if (!obj.loss_proto.skipped) rec.loss_proto = obj.loss_proto.value.value().item();
  rec.loss_cls = obj.loss_cls.value().item();
  if (obj.d_class_used) rec.d_class = obj.d_class.value().item();
  if (obj.d_domain_used) rec.d_domain = obj.d_domain.value().item();
  rec.d_total = obj.d_total.value().item();
  rec.alpha = alpha;
  rec.gamma = ctx.split.gamma;
  rec.source_accuracy = ctx.source_accuracy;
  rec.n_high = ctx.split.high.size();
  rec.n_low = ctx.split.low.size();
  rec.d_class_skipped = config.ablation.use_dc && !obj.d_class_used;
  rec.d_domain_skipped = config.ablation.use_dd && !obj.d_domain_used;
  rec.sigma = ctx.sigma;
  if (obj.d_class_used) rec.class_weights = ctx.class_weights;
  if (obj.d_domain_used) rec.domain_weights = ctx.domain_weights;

  if (!std::isfinite(rec.loss_cls) || !std::isfinite(rec.d_total)) {
    throw TrainingFault("non-finite loss at iteration " + std::to_string(rec.iteration) +
                            " (L_cls=" + format_double(rec.loss_cls) +
                            ", D=" + format_double(rec.d_total) + ")",
                        rec);
  }

  try {
    const auto cls_grads = diffcore::backward(graph, obj.loss_cls);
    std::optional<diffcore::Gradients> disc_grads;
    if (alpha != 0.0 && (obj.d_class_used || obj.d_domain_used)) {
      disc_grads = diffcore::backward(graph, obj.d_total);
    }
    state.params = apply_gradients(state.params, obj.model, cls_grads,
                                   disc_grads ? &*disc_grads : nullptr, alpha,
                                   config.learning_rate);
  } catch (const TrainingFault&) {
    throw;
  } catch (const NumericFault& e) {
    throw TrainingFault(std::string("iteration ") + std::to_string(rec.iteration) + ": " + e.what(),
                        rec);
  }
  ++state.iteration;
  return rec;
}

double evaluate(const ModelParams& params, const MultiDomainDataset& dataset) {
  const auto& labels = dataset.target_labels(data::EvaluationAccess{});
  const auto predicted = model::predict_labels(params, dataset.target_features());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predicted[i] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

ExperimentResult run_experiment(const TrainConfig& config, const MultiDomainDataset& dataset) {
  TrainState state = init_state(config, dataset);
  TrainReport report;
  report.config = config;
  for (std::size_t round = 0; round < config.rounds; ++round) {
    const double alpha = alpha_schedule(round, config.rounds);
    for (std::size_t it = 0; it < config.iters_per_round; ++it) {
      try {
        IterationRecord rec = train_step(state, dataset, config, alpha);
        rec.round = round;
        report.iterations.push_back(std::move(rec));
      } catch (TrainingFault& fault) {
        fault.record.round = round;
        report.iterations.push_back(fault.record);
        report.fault = fault.what();
        fault.partial = std::make_shared<TrainReport>(report);
        throw;
      }
    }
    if (dataset.has_target_labels()) report.round_accuracy.push_back(evaluate(state.params, dataset));
  }
  return {std::move(report), std::move(state.params), std::move(state.bank)};
}

}  // namespace pamda::train
