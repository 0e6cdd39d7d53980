#include "pamda/proto/protobank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "pamda/errors.hpp"
#include "pamda/format.hpp"

namespace pamda::proto {

BatchCentroids batch_class_centroids(const Tensor& embeddings, std::span<const int> labels,
                                     int num_classes, DivisorMode mode) {
  if (labels.size() != embeddings.rows()) {
    throw ContractViolation("batch_class_centroids: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(embeddings.rows()) + " rows");
  }
  const std::size_t d = embeddings.cols();
  BatchCentroids out{Tensor(static_cast<std::size_t>(num_classes), d),
                     std::vector<bool>(static_cast<std::size_t>(num_classes), false)};
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    if (k < 0 || k >= num_classes) {
      throw ContractViolation("batch_class_centroids: label out of range");
    }
    ++counts[k];
    auto src = embeddings.row(i);
    auto dst = out.centroids.row(static_cast<std::size_t>(k));
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  for (int k = 0; k < num_classes; ++k) {
    if (counts[k] == 0) continue;
    out.present[k] = true;
    const double divisor = mode == DivisorMode::ClusterSize
                               ? static_cast<double>(counts[k])
                               : static_cast<double>(embeddings.rows());
    for (double& v : out.centroids.row(static_cast<std::size_t>(k))) v /= divisor;
  }
  return out;
}

PrototypeBank::PrototypeBank(std::size_t num_sources, int num_classes, std::size_t dim,
                             double eta)
    : num_sources_(num_sources), num_classes_(num_classes), dim_(dim), eta_(eta) {
  if (num_sources == 0 || num_classes < 1 || dim == 0) {
    throw ConfigError("prototype bank dimensions must be positive");
  }
  if (!(eta >= 0.0 && eta < 1.0)) {
    throw ConfigError("momentum coefficient eta must lie in [0, 1), got " + format_double(eta));
  }
  const std::size_t n_slots = (num_sources + 1) * static_cast<std::size_t>(num_classes);
  slots_.assign(n_slots * dim, 0.0);
  initialized_.assign(n_slots, false);
}

std::size_t PrototypeBank::slot_index(DomainId domain, int k) const {
  if (k < 0 || k >= num_classes_) throw ContractViolation("prototype class index out of range");
  const std::size_t row = domain.is_target() ? num_sources_ : domain.index;
  if (row > num_sources_ || (!domain.is_target() && domain.index >= num_sources_)) {
    throw ContractViolation("prototype source index out of range");
  }
  return row * static_cast<std::size_t>(num_classes_) + static_cast<std::size_t>(k);
}

bool PrototypeBank::initialized(DomainId domain, int k) const {
  return initialized_[slot_index(domain, k)];
}

bool PrototypeBank::all_sources_initialized(int k) const {
  for (std::size_t j = 0; j < num_sources_; ++j) {
    if (!initialized(DomainId::source(j), k)) return false;
  }
  return true;
}

bool PrototypeBank::all_sources_initialized() const {
  for (int k = 0; k < num_classes_; ++k) {
    if (!all_sources_initialized(k)) return false;
  }
  return true;
}

bool PrototypeBank::any_initialized() const {
  for (bool b : initialized_) {
    if (b) return true;
  }
  return false;
}

std::span<const double> PrototypeBank::prototype(DomainId domain, int k) const {
  const std::size_t s = slot_index(domain, k);
  if (!initialized_[s]) {
    throw StateError("prototype (" + domain.name() + ", class " + std::to_string(k + 1) +
                     ") read before initialization");
  }
  return {slots_.data() + s * dim_, dim_};
}

std::span<const double> PrototypeBank::raw_slot(DomainId domain, int k) const {
  const std::size_t s = slot_index(domain, k);
  return {slots_.data() + s * dim_, dim_};
}

void PrototypeBank::momentum_update(DomainId domain, const BatchCentroids& batch) {
  if (batch.centroids.cols() != dim_ ||
      batch.centroids.rows() != static_cast<std::size_t>(num_classes_) ||
      batch.present.size() != static_cast<std::size_t>(num_classes_)) {
    throw ContractViolation("momentum_update: centroid shape " + batch.centroids.shape_string() +
                            " does not match bank");
  }
  for (int k = 0; k < num_classes_; ++k) {
    if (!batch.present[k]) continue;
    const std::size_t s = slot_index(domain, k);
    auto src = batch.centroids.row(static_cast<std::size_t>(k));
    double* dst = slots_.data() + s * dim_;
    if (initialized_[s]) {
      for (std::size_t c = 0; c < dim_; ++c) dst[c] = eta_ * dst[c] + (1.0 - eta_) * src[c];
    } else {
      for (std::size_t c = 0; c < dim_; ++c) dst[c] = src[c];
      initialized_[s] = true;
    }
  }
}

void PrototypeBank::restore(DomainId domain, int k, std::span<const double> values) {
  if (values.size() != dim_) throw ContractViolation("restore: prototype dimension mismatch");
  const std::size_t s = slot_index(domain, k);
  std::copy(values.begin(), values.end(), slots_.begin() + static_cast<std::ptrdiff_t>(s * dim_));
  initialized_[s] = true;
}

double adaptive_threshold(double source_accuracy) {
  if (!(source_accuracy >= 0.0 && source_accuracy <= 1.0)) {
    throw ContractViolation("adaptive_threshold: accuracy must lie in [0, 1]");
  }
  return 1.0 / (1.0 + std::exp(-3.0 * source_accuracy));
}

PseudoLabels assign_pseudo_labels(const Tensor& probs) {
  PseudoLabels out;
  out.labels.reserve(probs.rows());
  out.confidences.reserve(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    double total = 0.0;
    std::size_t best = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      total += row[c];
      if (row[c] > row[best]) best = c;
    }
    if (!(std::abs(total - 1.0) <= 1e-6)) {
      throw ContractViolation("assign_pseudo_labels: row " + std::to_string(r) + " sums to " +
                              format_double(total));
    }
    out.labels.push_back(static_cast<int>(best));
    out.confidences.push_back(row[best]);
  }
  return out;
}

ConfidenceSplit split_by_confidence(const PseudoLabels& pseudo, double gamma) {
  if (pseudo.labels.size() != pseudo.confidences.size()) {
    throw ContractViolation("split_by_confidence: length mismatch");
  }
  ConfidenceSplit split;
  split.gamma = gamma;
  for (std::size_t i = 0; i < pseudo.labels.size(); ++i) {
    if (pseudo.confidences[i] >= gamma) {
      split.high.push_back({i, pseudo.labels[i], pseudo.confidences[i]});
    } else {
      split.low.push_back(i);
    }
  }
  return split;
}

void write_prototype_csv(const std::filesystem::path& path, const PrototypeBank& bank) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "domain,class";
  for (std::size_t c = 0; c < bank.dim(); ++c) out << ",dim_" << (c + 1);
  out << ",initialized\n";
  auto emit = [&](DomainId domain) {
    for (int k = 0; k < bank.num_classes(); ++k) {
      out << domain.name() << ',' << (k + 1);
      for (double v : bank.raw_slot(domain, k)) out << ',' << format_double(v);
      out << ',' << (bank.initialized(domain, k) ? 1 : 0) << '\n';
    }
  };
  for (std::size_t j = 0; j < bank.num_sources(); ++j) emit(DomainId::source(j));
  emit(DomainId::target());
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pamda::proto
