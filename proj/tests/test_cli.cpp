#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "pamda/cli/commands.hpp"
#include "pamda/data/csv.hpp"
#include "pamda/errors.hpp"
#include "pamda/model/model.hpp"
#include "pamda/train/report.hpp"
#include "support/temp_dir.hpp"

using namespace pamda;
using namespace pamda::cli;
using pamda::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "pamda");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json moons_block(std::size_t n = 48) {
  return {{"generator", "rotated_moons"}, {"n_per_domain", n}, {"seed", 5}};
}

json quick_train(std::size_t rounds = 2, std::size_t iters = 2) {
  return {{"batch_size", 8}, {"rounds", rounds}, {"iters_per_round", iters}};
}

fs::path write_config(const TempDir& dir, const std::string& name, const json& doc) {
  const fs::path p = dir / name;
  write_json_file(p, doc);
  return p;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(CliGen, WritesDomainFilesAndManifest) {
  TempDir dir;
  const auto cfg = write_config(dir, "c.json", {{"dataset", moons_block()}, {"output_dir", "gen"}});
  const auto r = invoke({"gen", "-c", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(dir / "gen")) csvs += e.path().extension() == ".csv";
  EXPECT_EQ(csvs, 4u);

  const json manifest = read_json_file(dir / "gen/manifest.json");
  EXPECT_EQ(manifest.at("sources").size(), 3u);
  EXPECT_EQ(manifest.at("input_dim"), 2);
  EXPECT_EQ(manifest.at("seed"), 5);

  // K in the manifest equals the largest label across all files.
  int max_label = 0;
  std::vector<std::string> files;
  for (const auto& f : manifest.at("sources")) files.push_back(f.get<std::string>());
  files.push_back(manifest.at("target").get<std::string>());
  for (const auto& f : files) {
    for (const auto& row : csv_rows(dir / "gen" / f)) max_label = std::max(max_label, std::stoi(row.back()));
  }
  EXPECT_EQ(manifest.at("num_classes").get<int>(), max_label);
}

TEST(CliGen, RegenerationIsByteIdentical) {
  TempDir dir;
  const auto a = write_config(dir, "a.json", {{"dataset", moons_block()}, {"output_dir", "a"}});
  const auto b = write_config(dir, "b.json", {{"dataset", moons_block()}, {"output_dir", "b"}});
  ASSERT_EQ(invoke({"gen", "-c", a.string()}).code, 0);
  ASSERT_EQ(invoke({"gen", "-c", b.string()}).code, 0);
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / e.path().filename())) << e.path();
  }
}

TEST(CliGen, CsvDatasetIsRejected) {
  TempDir dir;
  const auto cfg = write_config(
      dir, "c.json", {{"dataset", {{"generator", "csv"}, {"sources", {"a.csv"}}, {"target", "t.csv"}}}});
  EXPECT_EQ(invoke({"gen", "-c", cfg.string()}).code, kExitConfig);
}

TEST(CliTrain, MinimalRunWritesAllArtifacts) {
  TempDir dir;
  const auto cfg = write_config(dir, "c.json",
                                {{"dataset", moons_block()}, {"train", quick_train(1, 1)}, {"output_dir", "run"}});
  const auto r = invoke({"train", "-c", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {kReportFile, kCheckpointFile, kPrototypeFile, kWeightFile}) {
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  }
  const json report = read_json_file(dir / "run" / kReportFile);
  EXPECT_EQ(report.at("iterations").size(), 1u);
  EXPECT_EQ(report.at("config").at("dataset").at("generator"), "rotated_moons");
  EXPECT_EQ(report.at("config").at("train").at("rounds"), 1);
  EXPECT_EQ(report.at("config").at("train").at("tau_d"), 10.0);
}

TEST(CliTrain, RerunGivesIdenticalCanonicalReport) {
  TempDir dir;
  const json doc{{"dataset", moons_block()}, {"train", quick_train()}};
  auto a = doc;
  a["output_dir"] = "a";
  auto b = doc;
  b["output_dir"] = "b";
  ASSERT_EQ(invoke({"train", "-c", write_config(dir, "a.json", a).string()}).code, 0);
  ASSERT_EQ(invoke({"train", "-c", write_config(dir, "b.json", b).string()}).code, 0);
  EXPECT_EQ(train::canonical_report(read_json_file(dir / "a" / kReportFile)).dump(),
            train::canonical_report(read_json_file(dir / "b" / kReportFile)).dump());
  EXPECT_EQ(slurp(dir / "a" / kCheckpointFile), slurp(dir / "b" / kCheckpointFile));
  EXPECT_EQ(slurp(dir / "a" / kPrototypeFile), slurp(dir / "b" / kPrototypeFile));
}

TEST(CliTrain, AblationGridWritesOneReportPerPoint) {
  TempDir dir;
  const auto cfg = write_config(dir, "c.json",
                                {{"dataset", moons_block()},
                                 {"train", quick_train(1, 2)},
                                 {"output_dir", "grid"},
                                 {"grid", {{"use_dc", {true, false}}, {"use_dd", {true, false}}}}});
  const auto r = invoke({"train", "-c", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t reports = 0;
  for (bool dc : {true, false}) {
    for (bool dd : {true, false}) {
      const fs::path p = dir / "grid" / ("dc" + std::to_string(dc) + "_dd" + std::to_string(dd) + "_pc1_seed0") /
                         kReportFile;
      ASSERT_TRUE(fs::exists(p)) << p;
      const json rep = read_json_file(p);
      EXPECT_EQ(rep.at("config").at("train").at("use_dc"), dc);
      EXPECT_EQ(rep.at("config").at("train").at("use_dd"), dd);
      ++reports;
    }
  }
  EXPECT_EQ(reports, 4u);
}

TEST(CliTrain, ManifestDatasetRoundTrip) {
  TempDir dir;
  const auto gen = write_config(dir, "g.json", {{"dataset", moons_block()}, {"output_dir", "data"}});
  ASSERT_EQ(invoke({"gen", "-c", gen.string()}).code, 0);
  const auto from_manifest = write_config(
      dir, "m.json",
      {{"dataset", {{"generator", "manifest"}, {"path", "data/manifest.json"}}},
       {"train", quick_train()},
       {"output_dir", "m"}});
  const auto direct =
      write_config(dir, "d.json", {{"dataset", moons_block()}, {"train", quick_train()}, {"output_dir", "d"}});
  ASSERT_EQ(invoke({"train", "-c", from_manifest.string()}).code, 0);
  ASSERT_EQ(invoke({"train", "-c", direct.string()}).code, 0);
  // Round-trip decimal formatting means the CSV path trains on the same numbers.
  EXPECT_EQ(read_json_file(dir / "m" / kReportFile).at("iterations"),
            read_json_file(dir / "d" / kReportFile).at("iterations"));
}

TEST(CliTrain, NumericFaultExitsTwoWithPartialReport) {
  TempDir dir;
  {
    std::ofstream s(dir / "s.csv");
    s << "f1,f2,label\n1e308,1e308,1\n-1e308,1e308,2\n1e308,-1e308,1\n-1e308,-1e308,2\n";
    std::ofstream t(dir / "t.csv");
    t << "f1,f2,label\n0.1,0.2,\n0.3,0.1,\n-0.2,0.5,\n0.7,0.7,\n";
  }
  const auto cfg = write_config(dir, "c.json",
                                {{"dataset", {{"generator", "csv"}, {"sources", {"s.csv", "s.csv"}}, {"target", "t.csv"}}},
                                 {"train", {{"batch_size", 4}, {"rounds", 1}, {"iters_per_round", 2}, {"learning_rate", 1e300}}},
                                 {"output_dir", "run"}});
  const auto r = invoke({"train", "-c", cfg.string()});
  EXPECT_EQ(r.code, kExitNumeric) << r.err;
  ASSERT_TRUE(fs::exists(dir / "run" / kReportFile));
  const json rep = read_json_file(dir / "run" / kReportFile);
  EXPECT_TRUE(rep.at("fault").is_string());
  EXPECT_FALSE(fs::exists(dir / "run" / kCheckpointFile));
}

TEST(CliEval, MatchesReportedFinalAccuracy) {
  TempDir dir;
  const auto cfg =
      write_config(dir, "c.json", {{"dataset", moons_block(96)}, {"train", quick_train(2, 3)}, {"output_dir", "run"}});
  ASSERT_EQ(invoke({"train", "-c", cfg.string()}).code, 0);
  const auto r = invoke({"eval", "--checkpoint", (dir / "run" / kCheckpointFile).string(), "-c", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("target_accuracy=", 0), 0u);
  const double reported = read_json_file(dir / "run" / kReportFile).at("final_target_accuracy").get<double>();
  const json eval = read_json_file(dir / "run" / kEvalFile);
  EXPECT_EQ(eval.size(), 1u);
  EXPECT_NEAR(eval.at("target_accuracy").get<double>(), reported, 1e-12);
  EXPECT_NEAR(std::stod(r.out.substr(16)), reported, 1e-12);
}

TEST(CliEval, FreshModelsNearChance) {
  TempDir dir;
  data::RotatedMoonsParams p;
  p.n_per_domain = 400;
  const ExperimentConfig config{p, train::TrainConfig{}, dir.path(), std::nullopt};
  model::Architecture arch;
  double total = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    const fs::path ckpt = dir / ("m" + std::to_string(s) + ".ckpt");
    model::save_checkpoint(ckpt, model::init_model(arch, static_cast<std::uint64_t>(s)));
    std::ostringstream sink;
    total += cmd_eval(ckpt, config, dir / "e.json", sink);
  }
  // An untrained network is an arbitrary split of the plane; averaged over
  // seeds it should sit near chance. Binomial sd of the mean is far below 0.1.
  EXPECT_NEAR(total / seeds, 0.5, 0.1);
}

TEST(CliEval, CorruptedCheckpointIsSchemaError) {
  TempDir dir;
  const auto cfg =
      write_config(dir, "c.json", {{"dataset", moons_block()}, {"train", quick_train(1, 1)}, {"output_dir", "run"}});
  ASSERT_EQ(invoke({"train", "-c", cfg.string()}).code, 0);
  const fs::path ckpt = dir / "run" / kCheckpointFile;
  std::string text = slurp(ckpt);
  text.resize(text.size() / 2);
  std::ofstream(ckpt, std::ios::binary | std::ios::trunc) << text;
  const auto r = invoke({"eval", "--checkpoint", ckpt.string(), "-c", cfg.string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(CliEval, DimensionMismatchNamesBothDims) {
  TempDir dir;
  model::Architecture arch;
  arch.input_dim = 5;
  const fs::path ckpt = dir / "m.ckpt";
  model::save_checkpoint(ckpt, model::init_model(arch, 0));
  const auto cfg = write_config(dir, "c.json", {{"dataset", moons_block()}});
  const auto r = invoke({"eval", "--checkpoint", ckpt.string(), "-c", cfg.string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("5"), std::string::npos);
  EXPECT_NE(r.err.find("2"), std::string::npos);
}

TEST(CliEval, MissingCheckpointIsIoError) {
  TempDir dir;
  const auto cfg = write_config(dir, "c.json", {{"dataset", moons_block()}});
  EXPECT_EQ(invoke({"eval", "--checkpoint", (dir / "none.ckpt").string(), "-c", cfg.string()}).code, kExitIo);
}

TEST(CliDumpWeights, RowCountsAndSimplexGroups) {
  TempDir dir;
  const auto cfg = write_config(dir, "c.json",
                                {{"dataset", moons_block(96)},
                                 {"train", {{"batch_size", 16}, {"rounds", 2}, {"iters_per_round", 3}, {"gamma_override", 0.55}}},
                                 {"output_dir", "run"}});
  ASSERT_EQ(invoke({"train", "-c", cfg.string()}).code, 0);
  const fs::path report = dir / "run" / kReportFile;
  const fs::path out = dir / "w.csv";
  ASSERT_EQ(invoke({"dump-weights", "--report", report.string(), "-o", out.string()}).code, 0);
  EXPECT_EQ(slurp(out), slurp(dir / "run" / kWeightFile));

  const json doc = read_json_file(report);
  std::size_t expected_rows = 0;
  for (const auto& rec : doc.at("iterations")) {
    if (!rec.at("class_weights").is_null()) {
      const auto& present = rec.at("class_weights").at("present");
      expected_rows += 3 * static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
    }
    if (!rec.at("domain_weights").is_null()) expected_rows += 3;
  }
  const auto rows = csv_rows(out);
  ASSERT_GT(expected_rows, 0u);
  EXPECT_EQ(rows.size(), expected_rows);

  std::map<std::pair<std::string, std::string>, double> class_sums;
  std::map<std::string, double> domain_sums;
  for (const auto& row : rows) {
    ASSERT_EQ(row.size(), 5u);
    if (row[1] == "class") {
      class_sums[{row[0], row[2]}] += std::stod(row[4]);
    } else {
      EXPECT_EQ(row[1], "domain");
      EXPECT_TRUE(row[2].empty());
      domain_sums[row[0]] += std::stod(row[4]);
    }
  }
  EXPECT_FALSE(class_sums.empty());
  for (const auto& [key, sum] : class_sums) EXPECT_NEAR(sum, 1.0, 1e-9);
  for (const auto& [key, sum] : domain_sums) EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(CliDumpWeights, NothingToDump) {
  TempDir dir;
  const auto cfg = write_config(dir, "c.json",
                                {{"dataset", moons_block()},
                                 {"train", {{"batch_size", 8}, {"rounds", 1}, {"iters_per_round", 2},
                                            {"use_dc", false}, {"use_dd", false}}},
                                 {"output_dir", "run"}});
  ASSERT_EQ(invoke({"train", "-c", cfg.string()}).code, 0);
  const auto r = invoke({"dump-weights", "--report", (dir / "run" / kReportFile).string(), "-o",
                         (dir / "w.csv").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("nothing to dump"), std::string::npos);
}

TEST(CliDumpPrototypes, MatchesTrainArtifact) {
  TempDir dir;
  const auto cfg =
      write_config(dir, "c.json", {{"dataset", moons_block()}, {"train", quick_train()}, {"output_dir", "run"}});
  ASSERT_EQ(invoke({"train", "-c", cfg.string()}).code, 0);
  const fs::path out = dir / "p.csv";
  ASSERT_EQ(invoke({"dump-prototypes", "--report", (dir / "run" / kReportFile).string(), "-o", out.string()}).code, 0);
  EXPECT_EQ(slurp(out), slurp(dir / "run" / kPrototypeFile));
}

TEST(CliConfig, ErrorsMapToExitCodes) {
  TempDir dir;
  const auto unknown = write_config(dir, "u.json", {{"dataset", moons_block()}, {"trian", json::object()}});
  EXPECT_EQ(invoke({"train", "-c", unknown.string()}).code, kExitConfig);
  const auto bad_train = write_config(dir, "b.json", {{"dataset", moons_block()}, {"train", {{"eta", 2.0}}}});
  EXPECT_EQ(invoke({"train", "-c", bad_train.string()}).code, kExitConfig);
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_EQ(invoke({"train", "-c", (dir / "broken.json").string()}).code, kExitConfig);
  EXPECT_EQ(invoke({"train", "-c", (dir / "absent.json").string()}).code, kExitIo);
  EXPECT_EQ(invoke({}).code, kExitConfig);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(invoke({"--help"}).code, kExitOk);
}

TEST(CliConfig, EchoIsCompleteAndReparses) {
  TempDir dir;
  const json doc{{"dataset", moons_block()}, {"train", quick_train()}, {"grid", {{"seed", {1, 2}}}}};
  const auto parsed = parse_experiment_config(doc, dir.path());
  const json echo = experiment_to_json(parsed);
  EXPECT_EQ(echo.at("train").size(), 18u);
  EXPECT_EQ(echo.at("dataset").at("source_angles_deg"), json({0.0, 15.0, 30.0}));
  EXPECT_EQ(experiment_to_json(parse_experiment_config(echo, "/elsewhere")), echo);
  EXPECT_EQ(expand_grid(parsed).size(), 2u);
}
