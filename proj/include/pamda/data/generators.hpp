#pragma once

#include <cstdint>
#include <vector>

#include "pamda/data/dataset.hpp"

namespace pamda::data {

struct RotatedMoonsParams {
  std::size_t n_sources = 3;
  std::size_t n_per_domain = 400;
  std::vector<double> source_angles_deg{0.0, 15.0, 30.0};
  double target_angle_deg = 45.0;
  double noise_sd = 0.1;
  std::uint64_t seed = 0;
};

/// Two interleaved half circles (K = 2, D_in = 2) per domain, centered on
/// the origin and rotated by the domain's angle, with Gaussian noise.
MultiDomainDataset make_rotated_moons(const RotatedMoonsParams& params);

struct ShiftedBlobsParams {
  std::size_t n_sources = 2;
  int num_classes = 3;
  std::size_t n_per_domain = 300;
  /// n_sources + 1 offsets; the last one translates the target. Their common
  /// length is the input dimension.
  std::vector<std::vector<double>> domain_offsets;
  double class_separation = 4.0;
  double noise_sd = 0.5;
  std::uint64_t seed = 0;
};

/// K isotropic Gaussian clusters at fixed anchors, translated per domain.
MultiDomainDataset make_shifted_blobs(const ShiftedBlobsParams& params);

}  // namespace pamda::data
