#pragma once

#include <vector>

#include "json.hpp"

#include "pamda/disc/discrepancy.hpp"
#include "pamda/proto/protobank.hpp"
#include "pamda/train/trainer.hpp"

namespace pamda::train {

using json = nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;

/// Every TrainConfig field with its resolved value.
json config_to_json(const TrainConfig& config);

/// Strict: unknown keys and wrongly typed values raise ConfigError. Missing
/// keys keep their defaults.
TrainConfig config_from_json(const json& j);

json record_to_json(const IterationRecord& record);
json bank_to_json(const PrototypeBank& bank);
PrototypeBank bank_from_json(const json& j);

/// Report document: schema_version, generated_at, config, iterations,
/// target_accuracy, final_target_accuracy, fault. Callers add artifact paths
/// and the dataset block.
json report_to_json(const TrainReport& report);

/// Report without wall-clock fields; two runs with the same config and seed
/// produce equal canonical documents.
json canonical_report(json report);

/// Class and domain weights of every iteration that recorded them. Throws
/// SchemaError on a malformed document.
std::vector<disc::WeightSnapshot> weight_snapshots_from_report(const json& report);

}  // namespace pamda::train
