#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pamda/diffcore/graph.hpp"
#include "pamda/proto/protobank.hpp"

namespace pamda::disc {

using diffcore::Graph;
using diffcore::Tensor;
using diffcore::Var;
using proto::BatchCentroids;
using proto::PrototypeBank;

/// x.y / (|x| |y|); 0 when either norm is below 1e-12.
double cosine_similarity(std::span<const double> x, std::span<const double> y);

/// Per-class temperature softmax over sources of the cosine similarity
/// between each source prototype and the target batch centroid.
struct ClassWeights {
  Tensor w;                   // N x K; columns of absent classes are zero
  std::vector<bool> present;  // class had a target centroid this step
  double tau_c = 0.1;

  double at(std::size_t j, int k) const { return w(j, static_cast<std::size_t>(k)); }
};

struct DomainWeights {
  std::vector<double> e;  // length N
  double tau_d = 10.0;
};

/// Gaussian kernel exp(-|a - b|^2 / (2 sigma^2)). A missing sigma means the
/// median heuristic is resolved from the participating points.
struct KernelSpec {
  std::optional<double> sigma;

  static KernelSpec median() { return {}; }
  static KernelSpec fixed(double s) { return {s}; }
  bool is_median() const { return !sigma.has_value(); }
};

double gaussian_kernel(std::span<const double> a, std::span<const double> b, double sigma);

/// Median pairwise Euclidean distance over the rows of `points` (median
/// mode), falling back to 1.0 below 1e-12; the fixed sigma otherwise.
double resolve_bandwidth(const Tensor& points, const KernelSpec& spec);

/// Throws StateError naming (j, k) if a needed source prototype is missing.
ClassWeights class_similarity_weights(const PrototypeBank& bank, const BatchCentroids& target,
                                      double tau_c);

struct ClassDiscrepancy {
  Var total;                           // mean of per-class terms; 0 when t1 is empty
  std::vector<std::optional<Var>> per_class;  // length K, empty where no t1 sample
  bool empty = true;
};

/// `groups[k]` holds the 1 x d embedding rows pseudo-labeled k in the
/// high-confidence subset. Differentiable in those rows only.
ClassDiscrepancy class_aggregation_discrepancy(Graph& graph, const PrototypeBank& bank,
                                               const ClassWeights& weights,
                                               const std::vector<std::vector<Var>>& groups,
                                               double sigma);

/// Row j = mean over classes of source j's prototypes.
Tensor domain_prototypes(const PrototypeBank& bank);

/// Mean of the low-confidence rows; nullopt when there are none.
std::optional<Var> target_domain_prototype(Graph& graph, std::span<const Var> rows);

DomainWeights domain_similarity_weights(const Tensor& source_prototypes,
                                        std::span<const double> target_prototype, double tau_d);

struct DomainDiscrepancy {
  Var value;
  bool skipped = true;
};

/// Squared RKHS distance between the weighted source prototype mixture and
/// the mean embedding of the low-confidence rows. Source coefficients are
/// e_j / K when `normalize_by_k`, else e_j.
DomainDiscrepancy domain_aggregation_discrepancy(Graph& graph, const PrototypeBank& bank,
                                                 const DomainWeights& weights,
                                                 std::span<const Var> rows, double sigma,
                                                 bool normalize_by_k = true);

Var total_discrepancy(Var class_term, Var domain_term);

struct WeightSnapshot {
  std::size_t iteration = 0;
  std::optional<ClassWeights> class_weights;
  std::optional<DomainWeights> domain_weights;
};

/// CSV `iteration,level,class,source_domain,weight`; class and source
/// indices are 1-based, class is empty on domain rows.
void write_weight_csv(const std::filesystem::path& path, std::span<const WeightSnapshot> snapshots);

}  // namespace pamda::disc
