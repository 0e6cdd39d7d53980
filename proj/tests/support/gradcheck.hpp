#pragma once

// Finite-difference checks of every differentiable term of one training
// iteration on a miniature configuration (D_in=2, hidden [4], d=4, K=2,
// N=2, m=4).

#include <algorithm>
#include <functional>
#include <optional>
#include <vector>

#include "pamda/data/generators.hpp"
#include "pamda/diffcore/finite_diff.hpp"
#include "pamda/train/trainer.hpp"

namespace pamda::testing {

using diffcore::Tensor;
using train::StepContext;
using train::StepObjective;
using train::TrainConfig;

inline std::vector<Tensor*> parameter_tensors(model::ModelParams& p) {
  std::vector<Tensor*> out;
  for (auto& l : p.extractor) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& l : p.classifier) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

inline std::vector<diffcore::Var> parameter_vars(const model::BoundModel& b) {
  std::vector<diffcore::Var> out;
  for (const auto& l : b.extractor) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  for (const auto& l : b.classifier) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

struct MiniatureInstance {
  data::MultiDomainDataset dataset;
  TrainConfig config;
  model::ModelParams params;
  StepContext context;
};

inline TrainConfig miniature_config(std::uint64_t seed) {
  TrainConfig c;
  c.batch_size = 4;
  c.hidden_dims = {4};
  c.embedding_dim = 4;
  c.classifier_hidden = 4;
  c.seed = seed;
  return c;
}

/// A frozen iteration in which D_c and D_d are both active: the threshold
/// is placed between the second and third target confidences. Returns
/// nothing when the sampled batches cannot provide that.
inline std::optional<MiniatureInstance> miniature_instance(std::uint64_t seed) {
  data::RotatedMoonsParams moons;
  moons.n_sources = 2;
  moons.source_angles_deg = {0.0, 20.0};
  moons.target_angle_deg = 40.0;
  moons.n_per_domain = 40;
  moons.seed = seed;
  auto dataset = data::make_rotated_moons(moons);
  TrainConfig config = miniature_config(seed);

  const train::TrainState initial = train::init_state(config, dataset);
  train::TrainState probe_state = initial;
  config.gamma_override = 0.0;
  const StepContext probe = train::prepare_step(probe_state, dataset, config);
  const Tensor probs = model::predict_probs(initial.params, probe.target_batch.features);
  std::vector<double> conf;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    conf.push_back(*std::max_element(r.begin(), r.end()));
  }
  std::sort(conf.begin(), conf.end());
  if (!(conf[1] < conf[2])) return std::nullopt;
  config.gamma_override = 0.5 * (conf[1] + conf[2]);

  train::TrainState state = initial;
  StepContext ctx = train::prepare_step(state, dataset, config);
  if (!ctx.d_class_active || !ctx.d_domain_active) return std::nullopt;
  return MiniatureInstance{std::move(dataset), config, initial.params, std::move(ctx)};
}

using TermSelector = std::function<diffcore::Var(const StepObjective&)>;

/// Norm-wise relative error between backward() and central differences of
/// one term over the full parameter vector.
inline double term_gradient_error(const MiniatureInstance& inst, const TermSelector& term) {
  diffcore::Graph g;
  const StepObjective obj = train::build_objective(g, inst.params, inst.context, inst.config);
  const auto grads = diffcore::backward(g, term(obj));

  std::vector<double> analytic;
  for (const auto& v : parameter_vars(obj.model)) {
    auto it = grads.find(v.id());
    const Tensor t = it == grads.end() ? Tensor(v.value().rows(), v.value().cols()) : it->second;
    analytic.insert(analytic.end(), t.data().begin(), t.data().end());
  }

  auto probe = inst.params;
  std::vector<double> numeric;
  for (Tensor* slot : parameter_tensors(probe)) {
    const Tensor original = *slot;
    const Tensor fd = diffcore::finite_diff_grad(
        [&](const Tensor& v) {
          *slot = v;
          diffcore::Graph h;
          const double out =
              term(train::build_objective(h, probe, inst.context, inst.config)).value().item();
          *slot = original;
          return out;
        },
        original, 1e-5);
    numeric.insert(numeric.end(), fd.data().begin(), fd.data().end());
  }
  const std::size_t n = analytic.size();
  return diffcore::relative_error(Tensor(1, n, analytic), Tensor(1, n, numeric));
}

struct NamedTerm {
  const char* name;
  TermSelector select;
};

inline std::vector<NamedTerm> objective_terms(double alpha) {
  return {
      {"L_cls^s", [](const StepObjective& o) { return o.loss_source; }},
      {"L_cls^p", [](const StepObjective& o) { return o.loss_proto.value; }},
      {"D_c", [](const StepObjective& o) { return o.d_class; }},
      {"D_d", [](const StepObjective& o) { return o.d_domain; }},
      {"L_cls + alpha D",
       [alpha](const StepObjective& o) {
         return diffcore::add(o.loss_cls, diffcore::scale(o.d_total, alpha));
       }},
  };
}

}  // namespace pamda::testing
