#include "pamda/data/generators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <span>

#include "pamda/errors.hpp"

namespace pamda::data {

namespace {

// Each domain draws from a stream keyed by the global seed and the domain's
// own defining parameters, so generation does not depend on domain order.
std::mt19937_64 domain_rng(std::uint64_t seed, std::uint32_t tag, std::span<const double> key) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32), tag};
  for (double v : key) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    words.push_back(static_cast<std::uint32_t>(bits));
    words.push_back(static_cast<std::uint32_t>(bits >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

LabeledSamples shuffled(LabeledSamples s, std::mt19937_64& rng) {
  std::vector<std::size_t> order(s.labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  LabeledSamples out{Tensor(s.features.rows(), s.features.cols()), {}};
  out.labels.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto src = s.features.row(order[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(s.labels[order[i]]);
  }
  return out;
}

LabeledSamples moons_domain(std::size_t n, double angle_deg, double noise_sd, std::uint64_t seed) {
  const double key[] = {angle_deg};
  auto rng = domain_rng(seed, 1, key);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n_outer = n / 2;
  const std::size_t n_inner = n - n_outer;
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);

  LabeledSamples out{Tensor(n, 2), std::vector<int>(n)};
  auto emit = [&](std::size_t row, double x, double y, int label) {
    // Both moons together have centroid (0.5, 0.25).
    x -= 0.5;
    y -= 0.25;
    double rx = c * x - s * y;
    double ry = s * x + c * y;
    if (noise_sd > 0.0) {
      rx += noise_sd * noise(rng);
      ry += noise_sd * noise(rng);
    }
    out.features(row, 0) = rx;
    out.features(row, 1) = ry;
    out.labels[row] = label;
  };
  auto arc = [](std::size_t i, std::size_t count) {
    return count > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1)
                     : 0.0;
  };
  for (std::size_t i = 0; i < n_outer; ++i) {
    const double t = arc(i, n_outer);
    emit(i, std::cos(t), std::sin(t), 0);
  }
  for (std::size_t i = 0; i < n_inner; ++i) {
    const double t = arc(i, n_inner);
    emit(n_outer + i, 1.0 - std::cos(t), 0.5 - std::sin(t), 1);
  }
  return shuffled(std::move(out), rng);
}

}  // namespace

MultiDomainDataset make_rotated_moons(const RotatedMoonsParams& p) {
  if (p.source_angles_deg.size() != p.n_sources) {
    throw ConfigError("rotated moons: " + std::to_string(p.source_angles_deg.size()) +
                      " source angles given for " + std::to_string(p.n_sources) + " sources");
  }
  if (p.n_sources < 2) throw ConfigError("rotated moons: need at least 2 sources");
  if (p.noise_sd < 0.0) throw ConfigError("rotated moons: noise_sd must be non-negative");
  if (p.n_per_domain < 4) throw ConfigError("rotated moons: n_per_domain must be at least 4");

  std::vector<LabeledSamples> sources;
  for (double angle : p.source_angles_deg) {
    sources.push_back(moons_domain(p.n_per_domain, angle, p.noise_sd, p.seed));
  }
  auto target = moons_domain(p.n_per_domain, p.target_angle_deg, p.noise_sd, p.seed);
  return MultiDomainDataset(std::move(sources), std::move(target.features),
                            std::move(target.labels), 2);
}

MultiDomainDataset make_shifted_blobs(const ShiftedBlobsParams& p) {
  if (p.num_classes < 2) throw ConfigError("shifted blobs: need at least 2 classes");
  if (p.n_sources < 2) throw ConfigError("shifted blobs: need at least 2 sources");
  if (!(p.class_separation > 0.0)) {
    throw ConfigError("shifted blobs: class_separation must be positive");
  }
  if (p.noise_sd < 0.0) throw ConfigError("shifted blobs: noise_sd must be non-negative");
  if (p.domain_offsets.size() != p.n_sources + 1) {
    throw ConfigError("shifted blobs: expected " + std::to_string(p.n_sources + 1) +
                      " domain offsets (sources then target), got " +
                      std::to_string(p.domain_offsets.size()));
  }
  const std::size_t dim = p.domain_offsets.front().size();
  if (dim == 0) throw ConfigError("shifted blobs: offsets must be non-empty vectors");
  for (const auto& o : p.domain_offsets) {
    if (o.size() != dim) throw ConfigError("shifted blobs: offsets differ in dimension");
  }
  if (p.n_per_domain < static_cast<std::size_t>(p.num_classes)) {
    throw ConfigError("shifted blobs: n_per_domain smaller than class count");
  }

  const int K = p.num_classes;
  Tensor anchors(static_cast<std::size_t>(K), dim);
  for (int k = 0; k < K; ++k) {
    if (dim == 1) {
      anchors(k, 0) = p.class_separation * k;
    } else {
      const double phi = 2.0 * std::numbers::pi * k / K;
      anchors(k, 0) = p.class_separation * std::cos(phi);
      anchors(k, 1) = p.class_separation * std::sin(phi);
    }
  }

  auto make_domain = [&](const std::vector<double>& offset) {
    auto rng = domain_rng(p.seed, 2, offset);
    std::normal_distribution<double> noise(0.0, 1.0);
    LabeledSamples s{Tensor(p.n_per_domain, dim), std::vector<int>(p.n_per_domain)};
    for (std::size_t i = 0; i < p.n_per_domain; ++i) {
      const int k = static_cast<int>(i % static_cast<std::size_t>(K));
      s.labels[i] = k;
      for (std::size_t c = 0; c < dim; ++c) {
        s.features(i, c) = anchors(k, c) + offset[c] + p.noise_sd * noise(rng);
      }
    }
    return shuffled(std::move(s), rng);
  };

  std::vector<LabeledSamples> sources;
  for (std::size_t j = 0; j < p.n_sources; ++j) sources.push_back(make_domain(p.domain_offsets[j]));
  auto target = make_domain(p.domain_offsets.back());
  return MultiDomainDataset(std::move(sources), std::move(target.features),
                            std::move(target.labels), K);
}

}  // namespace pamda::data
