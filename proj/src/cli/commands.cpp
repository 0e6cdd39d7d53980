#include "pamda/cli/commands.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "pamda/data/csv.hpp"
#include "pamda/errors.hpp"
#include "pamda/format.hpp"
#include "pamda/model/model.hpp"
#include "pamda/train/report.hpp"

namespace pamda::cli {

namespace fs = std::filesystem;

namespace {

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
}

bool is_synthetic(const DatasetSpec& spec) {
  return std::holds_alternative<data::RotatedMoonsParams>(spec) ||
         std::holds_alternative<data::ShiftedBlobsParams>(spec);
}

std::uint64_t dataset_seed(const DatasetSpec& spec) {
  if (auto* p = std::get_if<data::RotatedMoonsParams>(&spec)) return p->seed;
  return std::get<data::ShiftedBlobsParams>(spec).seed;
}

json build_report(const train::TrainReport& report, const ExperimentConfig& config,
                  const std::string& grid_point, const train::PrototypeBank* bank) {
  json doc = train::report_to_json(report);
  doc["config"] = {{"dataset", dataset_to_json(config.dataset)},
                   {"train", train::config_to_json(report.config)}};
  doc["grid_point"] = grid_point.empty() ? json(nullptr) : json(grid_point);
  doc["final_prototypes"] = bank ? train::bank_to_json(*bank) : json(nullptr);
  return doc;
}

}  // namespace

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const IoError*>(&error)) return kExitIo;
  if (dynamic_cast<const NumericFault*>(&error)) return kExitNumeric;
  return kExitConfig;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

fs::path cmd_gen(const ExperimentConfig& config) {
  if (!is_synthetic(config.dataset)) {
    throw ConfigError("gen needs a rotated_moons or shifted_blobs dataset block");
  }
  const auto dataset = resolve_dataset(config.dataset);
  ensure_directory(config.output_dir);
  const auto files = data::write_dataset_csv(dataset, config.output_dir, true);

  json sources = json::array();
  for (std::size_t j = 0; j + 1 < files.size(); ++j) sources.push_back(files[j].filename().string());
  json manifest{{"sources", sources},
                {"target", files.back().filename().string()},
                {"num_classes", dataset.num_classes()},
                {"input_dim", dataset.input_dim()},
                {"seed", dataset_seed(config.dataset)},
                {"dataset", dataset_to_json(config.dataset)}};
  const fs::path path = config.output_dir / "manifest.json";
  write_json_file(path, manifest);
  return path;
}

std::vector<fs::path> cmd_train(const ExperimentConfig& config) {
  const auto dataset = resolve_dataset(config.dataset);
  std::vector<fs::path> reports;
  for (const GridPoint& point : expand_grid(config)) {
    const fs::path dir = point.name.empty() ? config.output_dir : config.output_dir / point.name;
    ensure_directory(dir);
    const fs::path report_path = dir / kReportFile;

    train::ExperimentResult result = [&] {
      try {
        return train::run_experiment(point.config, dataset);
      } catch (const train::TrainingFault& fault) {
        if (fault.partial) {
          write_json_file(report_path, build_report(*fault.partial, config, point.name, nullptr));
        }
        throw;
      }
    }();

    json doc = build_report(result.report, config, point.name, &result.bank);
    doc["artifacts"] = {{"report", kReportFile},
                        {"checkpoint", kCheckpointFile},
                        {"prototypes", kPrototypeFile},
                        {"weights", kWeightFile}};
    model::save_checkpoint(dir / kCheckpointFile, result.params);
    proto::write_prototype_csv(dir / kPrototypeFile, result.bank);
    const auto snapshots = train::weight_snapshots_from_report(doc);
    disc::write_weight_csv(dir / kWeightFile, snapshots);
    write_json_file(report_path, doc);
    reports.push_back(report_path);
  }
  return reports;
}

double cmd_eval(const fs::path& checkpoint, const ExperimentConfig& config,
                const fs::path& json_out, std::ostream& out) {
  const model::ModelParams params = model::load_checkpoint(checkpoint);
  const auto dataset = resolve_dataset(config.dataset);
  const std::size_t model_dim = params.extractor.front().weight.rows();
  if (model_dim != dataset.input_dim()) {
    std::ostringstream msg;
    msg << "checkpoint input dimension " << model_dim << " does not match dataset dimension "
        << dataset.input_dim();
    throw SchemaError(msg.str());
  }
  const std::size_t model_classes = params.classifier[1].weight.cols();
  if (model_classes != static_cast<std::size_t>(dataset.num_classes())) {
    std::ostringstream msg;
    msg << "checkpoint predicts " << model_classes << " classes but the dataset has "
        << dataset.num_classes();
    throw SchemaError(msg.str());
  }
  if (!dataset.has_target_labels()) throw SchemaError("eval needs target labels");

  const double accuracy = train::evaluate(params, dataset);
  out << "target_accuracy=" << format_double(accuracy) << '\n';
  if (json_out.has_parent_path()) ensure_directory(json_out.parent_path());
  write_json_file(json_out, json{{"target_accuracy", accuracy}});
  return accuracy;
}

void cmd_dump_weights(const fs::path& report, const fs::path& csv_out) {
  const auto snapshots = train::weight_snapshots_from_report(read_json_file(report));
  if (snapshots.empty()) throw SchemaError("nothing to dump: " + report.string() + " has no weight records");
  disc::write_weight_csv(csv_out, snapshots);
}

void cmd_dump_prototypes(const fs::path& report, const fs::path& csv_out) {
  const json doc = read_json_file(report);
  auto it = doc.find("final_prototypes");
  if (it == doc.end() || it->is_null()) {
    throw SchemaError("nothing to dump: " + report.string() + " has no final prototypes");
  }
  proto::write_prototype_csv(csv_out, train::bank_from_json(*it));
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prototype-aggregated multi-source domain adaptation experiments"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, report, out_path;

  auto* gen = app.add_subcommand("gen", "Write a synthetic dataset as CSV plus manifest.json");
  gen->add_option("-c,--config", config_path, "Experiment config")->required();

  auto* train_cmd = app.add_subcommand("train", "Train and write report, checkpoint and dumps");
  train_cmd->add_option("-c,--config", config_path, "Experiment config")->required();

  auto* eval = app.add_subcommand("eval", "Target accuracy of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval->add_option("-c,--config", config_path, "Config providing the dataset")->required();
  eval->add_option("-o,--out", out_path, "JSON output (default <output_dir>/eval.json)");

  auto* weights = app.add_subcommand("dump-weights", "Class and domain weights of a report as CSV");
  weights->add_option("--report", report, "report.json")->required();
  weights->add_option("-o,--out", out_path, "CSV output")->required();

  auto* protos = app.add_subcommand("dump-prototypes", "Final prototypes of a report as CSV");
  protos->add_option("--report", report, "report.json")->required();
  protos->add_option("-o,--out", out_path, "CSV output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      out << cmd_gen(load_experiment_config(config_path)).string() << '\n';
    } else if (train_cmd->parsed()) {
      for (const auto& path : cmd_train(load_experiment_config(config_path))) {
        out << path.string() << '\n';
      }
    } else if (eval->parsed()) {
      const auto config = load_experiment_config(config_path);
      const fs::path json_out = out_path.empty() ? config.output_dir / kEvalFile : fs::path(out_path);
      cmd_eval(checkpoint, config, json_out, out);
    } else if (weights->parsed()) {
      cmd_dump_weights(report, out_path);
    } else if (protos->parsed()) {
      cmd_dump_prototypes(report, out_path);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace pamda::cli
