#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "pamda/data/dataset.hpp"

namespace pamda::data {

// Header `f1,...,fD,label`, one sample per row. Labels are written 1-based;
// an empty label cell is only legal in the target file.

void write_domain_csv(const std::filesystem::path& path, const Tensor& features,
                      const std::optional<std::vector<int>>& labels);

/// Writes source_1.csv .. source_N.csv and target.csv into `dir`. The target
/// labels are included only when `include_target_labels` is set.
std::vector<std::filesystem::path> write_dataset_csv(const MultiDomainDataset& dataset,
                                                     const std::filesystem::path& dir,
                                                     bool include_target_labels);

MultiDomainDataset load_csv_dataset(const std::vector<std::filesystem::path>& source_paths,
                                    const std::filesystem::path& target_path);

}  // namespace pamda::data
