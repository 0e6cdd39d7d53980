#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "pamda/cli/experiment.hpp"

namespace pamda::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumeric = 2;
inline constexpr int kExitIo = 3;

/// Maps the library exception hierarchy onto process exit codes.
int exit_code_for(const std::exception& error);

/// Writes source_j.csv, target.csv and manifest.json into the output
/// directory. Returns the manifest path.
std::filesystem::path cmd_gen(const ExperimentConfig& config);

// Artifact file names inside a run directory.
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kPrototypeFile = "prototypes.csv";
inline constexpr const char* kWeightFile = "weights.csv";
inline constexpr const char* kEvalFile = "eval.json";

/// Trains every grid point and writes its four artifacts. A numeric fault
/// flushes the partial report of that run and is rethrown.
/// Returns the report paths.
std::vector<std::filesystem::path> cmd_train(const ExperimentConfig& config);

/// Target accuracy of a checkpoint on the configured dataset. Prints
/// `target_accuracy=<value>` to `out` and writes a one-entry JSON.
double cmd_eval(const std::filesystem::path& checkpoint, const ExperimentConfig& config,
                const std::filesystem::path& json_out, std::ostream& out);

/// Class and domain weights of a report as CSV. Throws SchemaError when the
/// report holds none.
void cmd_dump_weights(const std::filesystem::path& report, const std::filesystem::path& csv_out);

/// Final prototype bank of a report as CSV.
void cmd_dump_prototypes(const std::filesystem::path& report,
                         const std::filesystem::path& csv_out);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& doc);

/// Parses argv and dispatches. Never throws; returns the exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace pamda::cli
