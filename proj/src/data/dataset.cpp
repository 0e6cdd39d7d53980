#include "pamda/data/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "pamda/errors.hpp"

namespace pamda::data {

std::string DomainId::name() const {
  return is_target() ? std::string("target") : "source_" + std::to_string(index + 1);
}

namespace {

void check_labels(const std::vector<int>& labels, std::size_t rows, int num_classes,
                  const std::string& where) {
  if (labels.size() != rows) {
    throw SchemaError(where + ": " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(rows) + " samples");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw SchemaError(where + ": label " + std::to_string(y + 1) + " outside 1.." +
                        std::to_string(num_classes));
    }
  }
}

}  // namespace

MultiDomainDataset::MultiDomainDataset(std::vector<LabeledSamples> sources,
                                       Tensor target_features,
                                       std::optional<std::vector<int>> target_labels,
                                       int num_classes)
    : sources_(std::move(sources)),
      target_features_(std::move(target_features)),
      target_labels_(std::move(target_labels)),
      num_classes_(num_classes) {
  if (num_classes_ < 2) throw SchemaError("dataset needs at least 2 classes");
  if (sources_.size() < 2) throw SchemaError("dataset needs at least 2 source domains");
  const std::size_t dim = target_features_.cols();
  for (std::size_t j = 0; j < sources_.size(); ++j) {
    const auto where = DomainId::source(j).name();
    const auto& s = sources_[j];
    if (s.features.cols() != dim) {
      throw SchemaError(where + ": input dimension " + std::to_string(s.features.cols()) +
                        " differs from target dimension " + std::to_string(dim));
    }
    check_labels(s.labels, s.features.rows(), num_classes_, where);
    std::vector<bool> seen(num_classes_, false);
    for (int y : s.labels) seen[y] = true;
    for (int k = 0; k < num_classes_; ++k) {
      if (!seen[k]) {
        throw SchemaError(where + ": class " + std::to_string(k + 1) + " has no samples");
      }
    }
  }
  if (target_labels_) {
    check_labels(*target_labels_, target_features_.rows(), num_classes_, "target");
  }
}

std::size_t MultiDomainDataset::domain_size(DomainId domain) const {
  return features(domain).rows();
}

const Tensor& MultiDomainDataset::features(DomainId domain) const {
  return domain.is_target() ? target_features_ : sources_.at(domain.index).features;
}

const std::vector<int>& MultiDomainDataset::target_labels(EvaluationAccess) const {
  if (!target_labels_) throw StateError("target labels are not available for evaluation");
  access_count_->fetch_add(1);
  return *target_labels_;
}

bool operator==(const MultiDomainDataset& a, const MultiDomainDataset& b) {
  if (a.num_classes_ != b.num_classes_ || a.sources_.size() != b.sources_.size()) return false;
  for (std::size_t j = 0; j < a.sources_.size(); ++j) {
    if (a.sources_[j].features != b.sources_[j].features ||
        a.sources_[j].labels != b.sources_[j].labels) {
      return false;
    }
  }
  return a.target_features_ == b.target_features_ && a.target_labels_ == b.target_labels_;
}

BatchSampler::BatchSampler(std::size_t domain_size, std::uint64_t seed)
    : rng_(seed), order_(domain_size) {
  if (domain_size == 0) throw ConfigError("cannot sample from an empty domain");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next_indices(std::size_t m) {
  if (m == 0 || m > order_.size()) {
    throw ConfigError("batch size " + std::to_string(m) + " exceeds domain size " +
                      std::to_string(order_.size()));
  }
  if (cursor_ + m > order_.size()) {
    reshuffle();
    ++epoch_;
  }
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + m));
  cursor_ += m;
  return out;
}

Batch sample_batch(const MultiDomainDataset& dataset, DomainId domain, std::size_t m,
                   BatchSampler& sampler) {
  const Tensor& all = dataset.features(domain);
  if (m > all.rows()) {
    throw ConfigError("batch size " + std::to_string(m) + " exceeds size of " + domain.name() +
                      " (" + std::to_string(all.rows()) + ")");
  }
  Batch batch;
  batch.domain = domain;
  batch.indices = sampler.next_indices(m);
  batch.features = Tensor(m, all.cols());
  for (std::size_t i = 0; i < m; ++i) {
    auto src = all.row(batch.indices[i]);
    std::copy(src.begin(), src.end(), batch.features.row(i).begin());
  }
  if (!domain.is_target()) {
    const auto& labels = dataset.source(domain.index).labels;
    std::vector<int> ys(m);
    for (std::size_t i = 0; i < m; ++i) ys[i] = labels[batch.indices[i]];
    batch.labels = std::move(ys);
  }
  return batch;
}

}  // namespace pamda::data
