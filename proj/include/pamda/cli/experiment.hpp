#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "pamda/data/dataset.hpp"
#include "pamda/data/generators.hpp"
#include "pamda/train/trainer.hpp"

namespace pamda::cli {

using json = nlohmann::json;

struct CsvDatasetSpec {
  std::vector<std::filesystem::path> sources;
  std::filesystem::path target;
};

/// A manifest.json written by `gen`.
struct ManifestDatasetSpec {
  std::filesystem::path path;
};

using DatasetSpec = std::variant<data::RotatedMoonsParams, data::ShiftedBlobsParams,
                                 CsvDatasetSpec, ManifestDatasetSpec>;

/// Axes of an ablation grid. An absent axis keeps the value from `train`.
struct GridSpec {
  std::vector<bool> use_dc;
  std::vector<bool> use_dd;
  std::vector<bool> use_proto_cls;
  std::vector<std::uint64_t> seeds;
};

struct GridPoint {
  std::string name;  // output subdirectory
  train::TrainConfig config;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  train::TrainConfig train;
  std::filesystem::path output_dir;
  std::optional<GridSpec> grid;
};

/// Strict parse: unknown keys, wrong types and invalid values raise
/// ConfigError. Relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Fully resolved echo; parsing it again yields the same config.
json dataset_to_json(const DatasetSpec& spec);
json experiment_to_json(const ExperimentConfig& config);

data::MultiDomainDataset resolve_dataset(const DatasetSpec& spec);

/// Cartesian product of the grid axes in the order dc, dd, proto_cls, seed.
/// Without a grid, a single unnamed point.
std::vector<GridPoint> expand_grid(const ExperimentConfig& config);

}  // namespace pamda::cli
