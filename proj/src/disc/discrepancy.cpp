#include "pamda/disc/discrepancy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>

#include "pamda/errors.hpp"
#include "pamda/format.hpp"

namespace pamda::disc {

using data::DomainId;

namespace {

std::vector<double> tempered_softmax(const std::vector<double>& scores, double tau) {
  if (!(tau > 0.0)) throw ConfigError("softmax temperature must be positive");
  std::vector<double> out(scores.size());
  const double peak = *std::max_element(scores.begin(), scores.end()) / tau;
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] / tau - peak);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

// Differentiable kernel value between two 1 x d rows.
Var kernel_node(Var a, Var b, double sigma) {
  return diffcore::exp(
      diffcore::scale(diffcore::squared_norm(diffcore::subtract(a, b)), -0.5 / (sigma * sigma)));
}

Var row_constant(Graph& graph, std::span<const double> values) {
  return graph.constant(Tensor(1, values.size(), std::vector<double>(values.begin(), values.end())));
}

// constant + sum_i coef_i * term_i, as a 1 x 1 node.
Var linear_combination(Graph& graph, const std::vector<std::pair<double, Var>>& terms,
                       double constant) {
  Var c = graph.constant(Tensor::scalar(constant));
  if (terms.empty()) return c;
  std::vector<Var> scaled;
  scaled.reserve(terms.size());
  for (const auto& [coef, term] : terms) scaled.push_back(diffcore::scale(term, coef));
  return diffcore::add(diffcore::sum(diffcore::concat_rows(scaled)), c);
}

struct WeightedPoint {
  std::span<const double> point;
  double weight;
};

// |sum_p w_p phi(p) - (1/n) sum_x phi(g_x)|^2 through the kernel trick.
// Prototype points are constants; the rows carry gradients.
Var mixture_to_sample_mmd(Graph& graph, std::span<const WeightedPoint> prototypes,
                          std::span<const Var> rows, double sigma) {
  const double n = static_cast<double>(rows.size());
  double constant = 0.0;
  for (const auto& a : prototypes) {
    for (const auto& b : prototypes) {
      constant += a.weight * b.weight * gaussian_kernel(a.point, b.point, sigma);
    }
  }
  // Diagonal of the sample Gram matrix is exp(0) = 1.
  constant += n / (n * n);

  std::vector<std::pair<double, Var>> terms;
  for (const auto& p : prototypes) {
    Var b = row_constant(graph, p.point);
    for (const Var& x : rows) terms.emplace_back(-2.0 * p.weight / n, kernel_node(b, x, sigma));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = i + 1; k < rows.size(); ++k) {
      terms.emplace_back(2.0 / (n * n), kernel_node(rows[i], rows[k], sigma));
    }
  }
  return linear_combination(graph, terms, constant);
}

}  // namespace

double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractViolation("cosine_similarity: length mismatch");
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  const double nx = std::sqrt(xx);
  const double ny = std::sqrt(yy);
  if (nx < 1e-12 || ny < 1e-12) return 0.0;
  return std::clamp(xy / (nx * ny), -1.0, 1.0);
}

double gaussian_kernel(std::span<const double> a, std::span<const double> b, double sigma) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

double resolve_bandwidth(const Tensor& points, const KernelSpec& spec) {
  if (!spec.is_median()) {
    if (!(*spec.sigma > 0.0)) throw ConfigError("kernel bandwidth must be positive");
    return *spec.sigma;
  }
  if (points.rows() < 2) {
    throw ContractViolation("median bandwidth needs at least 2 points, got " +
                            std::to_string(points.rows()));
  }
  std::vector<double> dists;
  dists.reserve(points.rows() * (points.rows() - 1) / 2);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t k = i + 1; k < points.rows(); ++k) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < points.cols(); ++c) {
        const double diff = points(i, c) - points(k, c);
        d2 += diff * diff;
      }
      dists.push_back(std::sqrt(d2));
    }
  }
  std::sort(dists.begin(), dists.end());
  const std::size_t mid = dists.size() / 2;
  const double median = dists.size() % 2 == 1 ? dists[mid] : 0.5 * (dists[mid - 1] + dists[mid]);
  return median < 1e-12 ? 1.0 : median;
}

ClassWeights class_similarity_weights(const PrototypeBank& bank, const BatchCentroids& target,
                                      double tau_c) {
  const std::size_t N = bank.num_sources();
  const int K = bank.num_classes();
  ClassWeights out{Tensor(N, static_cast<std::size_t>(K)), target.present, tau_c};
  for (int k = 0; k < K; ++k) {
    if (!target.present[k]) continue;
    auto centroid = target.centroids.row(static_cast<std::size_t>(k));
    std::vector<double> sims(N);
    for (std::size_t j = 0; j < N; ++j) {
      sims[j] = cosine_similarity(bank.prototype(DomainId::source(j), k), centroid);
    }
    const auto w = tempered_softmax(sims, tau_c);
    for (std::size_t j = 0; j < N; ++j) out.w(j, static_cast<std::size_t>(k)) = w[j];
  }
  return out;
}

ClassDiscrepancy class_aggregation_discrepancy(Graph& graph, const PrototypeBank& bank,
                                               const ClassWeights& weights,
                                               const std::vector<std::vector<Var>>& groups,
                                               double sigma) {
  const int K = bank.num_classes();
  if (groups.size() != static_cast<std::size_t>(K)) {
    throw ContractViolation("class_aggregation_discrepancy: expected one group per class");
  }
  ClassDiscrepancy out;
  out.per_class.resize(static_cast<std::size_t>(K));
  std::vector<Var> present_terms;
  for (int k = 0; k < K; ++k) {
    const auto& rows = groups[k];
    if (rows.empty()) continue;
    if (!weights.present[k]) {
      throw ContractViolation("class weights missing for class " + std::to_string(k + 1) +
                              " present in the high-confidence subset");
    }
    std::vector<WeightedPoint> protos;
    for (std::size_t j = 0; j < bank.num_sources(); ++j) {
      protos.push_back({bank.prototype(DomainId::source(j), k), weights.at(j, k)});
    }
    Var term = mixture_to_sample_mmd(graph, protos, rows, sigma);
    out.per_class[k] = term;
    present_terms.push_back(term);
  }
  if (present_terms.empty()) {
    out.total = graph.constant(Tensor::scalar(0.0));
    out.empty = true;
    return out;
  }
  out.empty = false;
  out.total = diffcore::mean(diffcore::concat_rows(present_terms));
  return out;
}

Tensor domain_prototypes(const PrototypeBank& bank) {
  const std::size_t N = bank.num_sources();
  const int K = bank.num_classes();
  Tensor v(N, bank.dim());
  for (std::size_t j = 0; j < N; ++j) {
    auto row = v.row(j);
    for (int k = 0; k < K; ++k) {
      auto b = bank.prototype(DomainId::source(j), k);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
    for (double& x : row) x /= K;
  }
  return v;
}

std::optional<Var> target_domain_prototype(Graph& graph, std::span<const Var> rows) {
  if (rows.empty()) return std::nullopt;
  Var stacked = diffcore::concat_rows(rows);
  Var ones = graph.constant(Tensor(1, rows.size(), 1.0 / static_cast<double>(rows.size())));
  return diffcore::matmul(ones, stacked);
}

DomainWeights domain_similarity_weights(const Tensor& source_prototypes,
                                        std::span<const double> target_prototype,
                                        double tau_d) {
  std::vector<double> sims(source_prototypes.rows());
  for (std::size_t j = 0; j < sims.size(); ++j) {
    sims[j] = cosine_similarity(source_prototypes.row(j), target_prototype);
  }
  return {tempered_softmax(sims, tau_d), tau_d};
}

DomainDiscrepancy domain_aggregation_discrepancy(Graph& graph, const PrototypeBank& bank,
                                                 const DomainWeights& weights,
                                                 std::span<const Var> rows, double sigma,
                                                 bool normalize_by_k) {
  if (rows.empty()) return {graph.constant(Tensor::scalar(0.0)), true};
  if (weights.e.size() != bank.num_sources()) {
    throw ContractViolation("domain weights length does not match source count");
  }
  const int K = bank.num_classes();
  std::vector<WeightedPoint> protos;
  for (std::size_t j = 0; j < bank.num_sources(); ++j) {
    const double c = normalize_by_k ? weights.e[j] / K : weights.e[j];
    for (int k = 0; k < K; ++k) protos.push_back({bank.prototype(DomainId::source(j), k), c});
  }
  return {mixture_to_sample_mmd(graph, protos, rows, sigma), false};
}

Var total_discrepancy(Var class_term, Var domain_term) {
  return diffcore::add(class_term, domain_term);
}

void write_weight_csv(const std::filesystem::path& path,
                      std::span<const WeightSnapshot> snapshots) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,level,class,source_domain,weight\n";
  for (const auto& snap : snapshots) {
    if (snap.class_weights) {
      const auto& cw = *snap.class_weights;
      for (std::size_t k = 0; k < cw.present.size(); ++k) {
        if (!cw.present[k]) continue;
        for (std::size_t j = 0; j < cw.w.rows(); ++j) {
          out << snap.iteration << ",class," << (k + 1) << ',' << (j + 1) << ','
              << format_double(cw.w(j, k)) << '\n';
        }
      }
    }
    if (snap.domain_weights) {
      const auto& e = snap.domain_weights->e;
      for (std::size_t j = 0; j < e.size(); ++j) {
        out << snap.iteration << ",domain,," << (j + 1) << ',' << format_double(e[j]) << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pamda::disc
