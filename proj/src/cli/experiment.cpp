#include "pamda/cli/experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "pamda/data/csv.hpp"
#include "pamda/errors.hpp"
#include "pamda/train/report.hpp"

namespace pamda::cli {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

std::size_t as_count(const json& v, const std::string& what) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(what + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double as_number(const json& v, const std::string& what) {
  if (!v.is_number()) throw ConfigError(what + " must be a number");
  return v.get<double>();
}

std::string as_string(const json& v, const std::string& what) {
  if (!v.is_string()) throw ConfigError(what + " must be a string");
  return v.get<std::string>();
}

std::vector<double> as_numbers(const json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError(what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(as_number(x, what));
  return out;
}

fs::path resolve_path(const json& v, const fs::path& base, const std::string& what) {
  fs::path p = as_string(v, what);
  if (p.is_relative()) p = base / p;
  return p.lexically_normal();
}

data::RotatedMoonsParams parse_moons(const json& j) {
  reject_unknown(j,
                 {"generator", "n_sources", "n_per_domain", "source_angles_deg",
                  "target_angle_deg", "noise_sd", "seed"},
                 "dataset");
  data::RotatedMoonsParams p;
  if (auto* v = find(j, "source_angles_deg")) {
    p.source_angles_deg = as_numbers(*v, "dataset.source_angles_deg");
    p.n_sources = p.source_angles_deg.size();
  }
  if (auto* v = find(j, "n_sources")) p.n_sources = as_count(*v, "dataset.n_sources");
  if (auto* v = find(j, "n_per_domain")) p.n_per_domain = as_count(*v, "dataset.n_per_domain");
  if (auto* v = find(j, "target_angle_deg")) p.target_angle_deg = as_number(*v, "dataset.target_angle_deg");
  if (auto* v = find(j, "noise_sd")) p.noise_sd = as_number(*v, "dataset.noise_sd");
  if (auto* v = find(j, "seed")) p.seed = as_count(*v, "dataset.seed");
  if (p.n_sources != p.source_angles_deg.size()) {
    throw ConfigError("dataset.n_sources does not match the number of source angles");
  }
  return p;
}

data::ShiftedBlobsParams parse_blobs(const json& j) {
  reject_unknown(j,
                 {"generator", "n_sources", "num_classes", "n_per_domain", "domain_offsets",
                  "class_separation", "noise_sd", "seed"},
                 "dataset");
  data::ShiftedBlobsParams p;
  if (auto* v = find(j, "n_sources")) p.n_sources = as_count(*v, "dataset.n_sources");
  if (auto* v = find(j, "num_classes")) {
    p.num_classes = static_cast<int>(as_count(*v, "dataset.num_classes"));
  }
  if (auto* v = find(j, "n_per_domain")) p.n_per_domain = as_count(*v, "dataset.n_per_domain");
  if (auto* v = find(j, "domain_offsets")) {
    if (!v->is_array()) throw ConfigError("dataset.domain_offsets must be an array of arrays");
    for (const auto& row : *v) p.domain_offsets.push_back(as_numbers(row, "dataset.domain_offsets"));
  } else {
    // Sources shifted along the first axis, target beyond the last source.
    for (std::size_t j2 = 0; j2 <= p.n_sources; ++j2) {
      p.domain_offsets.push_back({static_cast<double>(j2), 0.0});
    }
  }
  if (auto* v = find(j, "class_separation")) p.class_separation = as_number(*v, "dataset.class_separation");
  if (auto* v = find(j, "noise_sd")) p.noise_sd = as_number(*v, "dataset.noise_sd");
  if (auto* v = find(j, "seed")) p.seed = as_count(*v, "dataset.seed");
  if (p.domain_offsets.size() != p.n_sources + 1) {
    throw ConfigError("dataset.domain_offsets needs n_sources + 1 rows");
  }
  return p;
}

CsvDatasetSpec parse_csv(const json& j, const fs::path& base) {
  reject_unknown(j, {"generator", "sources", "target"}, "dataset");
  const json* sources = find(j, "sources");
  const json* target = find(j, "target");
  if (!sources || !target) throw ConfigError("csv dataset needs 'sources' and 'target'");
  if (!sources->is_array() || sources->empty()) {
    throw ConfigError("dataset.sources must be a non-empty array of paths");
  }
  CsvDatasetSpec spec;
  for (const auto& s : *sources) spec.sources.push_back(resolve_path(s, base, "dataset.sources"));
  spec.target = resolve_path(*target, base, "dataset.target");
  return spec;
}

DatasetSpec parse_dataset(const json& j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("dataset: expected an object");
  const json* gen = find(j, "generator");
  if (!gen) throw ConfigError("dataset.generator is required");
  const std::string name = as_string(*gen, "dataset.generator");
  if (name == "rotated_moons") return parse_moons(j);
  if (name == "shifted_blobs") return parse_blobs(j);
  if (name == "csv") return parse_csv(j, base);
  if (name == "manifest") {
    reject_unknown(j, {"generator", "path"}, "dataset");
    const json* path = find(j, "path");
    if (!path) throw ConfigError("manifest dataset needs 'path'");
    return ManifestDatasetSpec{resolve_path(*path, base, "dataset.path")};
  }
  throw ConfigError("unknown dataset generator '" + name + "'");
}

std::vector<bool> parse_flag_axis(const json& v, const std::string& what) {
  if (!v.is_array() || v.empty()) throw ConfigError(what + " must be a non-empty array of booleans");
  std::vector<bool> out;
  for (const auto& x : v) {
    if (!x.is_boolean()) throw ConfigError(what + " must be a non-empty array of booleans");
    out.push_back(x.get<bool>());
  }
  return out;
}

GridSpec parse_grid(const json& j) {
  reject_unknown(j, {"use_dc", "use_dd", "use_proto_cls", "seed"}, "grid");
  GridSpec g;
  if (auto* v = find(j, "use_dc")) g.use_dc = parse_flag_axis(*v, "grid.use_dc");
  if (auto* v = find(j, "use_dd")) g.use_dd = parse_flag_axis(*v, "grid.use_dd");
  if (auto* v = find(j, "use_proto_cls")) g.use_proto_cls = parse_flag_axis(*v, "grid.use_proto_cls");
  if (auto* v = find(j, "seed")) {
    if (!v->is_array() || v->empty()) throw ConfigError("grid.seed must be a non-empty array");
    for (const auto& s : *v) g.seeds.push_back(as_count(s, "grid.seed"));
  }
  return g;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& doc, const fs::path& base_dir) {
  reject_unknown(doc, {"dataset", "train", "output_dir", "grid"}, "config");
  const json* dataset = find(doc, "dataset");
  if (!dataset) throw ConfigError("config: 'dataset' is required");
  ExperimentConfig config;
  config.dataset = parse_dataset(*dataset, base_dir);
  config.train = train::config_from_json(doc.contains("train") ? doc.at("train") : json::object());
  config.output_dir = doc.contains("output_dir")
                          ? resolve_path(doc.at("output_dir"), base_dir, "output_dir")
                          : (base_dir / "out").lexically_normal();
  if (auto* g = find(doc, "grid")) config.grid = parse_grid(*g);
  return config;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment_config(doc, fs::absolute(path).parent_path());
}

json dataset_to_json(const DatasetSpec& spec) {
  struct Visitor {
    json operator()(const data::RotatedMoonsParams& p) const {
      return {{"generator", "rotated_moons"},
              {"n_sources", p.n_sources},
              {"n_per_domain", p.n_per_domain},
              {"source_angles_deg", p.source_angles_deg},
              {"target_angle_deg", p.target_angle_deg},
              {"noise_sd", p.noise_sd},
              {"seed", p.seed}};
    }
    json operator()(const data::ShiftedBlobsParams& p) const {
      return {{"generator", "shifted_blobs"},
              {"n_sources", p.n_sources},
              {"num_classes", p.num_classes},
              {"n_per_domain", p.n_per_domain},
              {"domain_offsets", p.domain_offsets},
              {"class_separation", p.class_separation},
              {"noise_sd", p.noise_sd},
              {"seed", p.seed}};
    }
    json operator()(const CsvDatasetSpec& s) const {
      json sources = json::array();
      for (const auto& p : s.sources) sources.push_back(p.string());
      return {{"generator", "csv"}, {"sources", sources}, {"target", s.target.string()}};
    }
    json operator()(const ManifestDatasetSpec& s) const {
      return {{"generator", "manifest"}, {"path", s.path.string()}};
    }
  };
  return std::visit(Visitor{}, spec);
}

json experiment_to_json(const ExperimentConfig& config) {
  json doc{{"dataset", dataset_to_json(config.dataset)},
           {"train", train::config_to_json(config.train)},
           {"output_dir", config.output_dir.string()}};
  if (config.grid) {
    json grid = json::object();
    if (!config.grid->use_dc.empty()) grid["use_dc"] = config.grid->use_dc;
    if (!config.grid->use_dd.empty()) grid["use_dd"] = config.grid->use_dd;
    if (!config.grid->use_proto_cls.empty()) grid["use_proto_cls"] = config.grid->use_proto_cls;
    if (!config.grid->seeds.empty()) grid["seed"] = config.grid->seeds;
    doc["grid"] = grid;
  }
  return doc;
}

data::MultiDomainDataset resolve_dataset(const DatasetSpec& spec) {
  struct Visitor {
    data::MultiDomainDataset operator()(const data::RotatedMoonsParams& p) const {
      return data::make_rotated_moons(p);
    }
    data::MultiDomainDataset operator()(const data::ShiftedBlobsParams& p) const {
      return data::make_shifted_blobs(p);
    }
    data::MultiDomainDataset operator()(const CsvDatasetSpec& s) const {
      return data::load_csv_dataset(s.sources, s.target);
    }
    data::MultiDomainDataset operator()(const ManifestDatasetSpec& s) const {
      std::ifstream in(s.path);
      if (!in) throw IoError("cannot read manifest " + s.path.string());
      const fs::path dir = s.path.parent_path();
      try {
        const json m = json::parse(in);
        std::vector<fs::path> sources;
        for (const auto& f : m.at("sources")) sources.push_back(dir / f.get<std::string>());
        auto dataset = data::load_csv_dataset(sources, dir / m.at("target").get<std::string>());
        const int k = m.at("num_classes").get<int>();
        const std::size_t d = m.at("input_dim").get<std::size_t>();
        if (dataset.num_classes() != k || dataset.input_dim() != d) {
          std::ostringstream msg;
          msg << s.path.string() << ": manifest declares K=" << k << ", D_in=" << d
              << " but the files hold K=" << dataset.num_classes()
              << ", D_in=" << dataset.input_dim();
          throw SchemaError(msg.str());
        }
        return dataset;
      } catch (const json::exception& e) {
        throw SchemaError(s.path.string() + ": malformed manifest: " + e.what());
      }
    }
  };
  return std::visit(Visitor{}, spec);
}

std::vector<GridPoint> expand_grid(const ExperimentConfig& config) {
  if (!config.grid) return {GridPoint{"", config.train}};
  const GridSpec& g = *config.grid;
  const train::TrainConfig& base = config.train;
  auto axis = [](const std::vector<bool>& values, bool fallback) {
    return values.empty() ? std::vector<bool>{fallback} : values;
  };
  const auto dc = axis(g.use_dc, base.ablation.use_dc);
  const auto dd = axis(g.use_dd, base.ablation.use_dd);
  const auto pc = axis(g.use_proto_cls, base.ablation.use_proto_cls);
  const auto seeds = g.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : g.seeds;

  std::vector<GridPoint> points;
  for (bool a : dc) {
    for (bool b : dd) {
      for (bool c : pc) {
        for (std::uint64_t s : seeds) {
          GridPoint p{"", base};
          p.config.ablation = {a, b, c};
          p.config.seed = s;
          std::ostringstream name;
          name << "dc" << a << "_dd" << b << "_pc" << c << "_seed" << s;
          p.name = name.str();
          points.push_back(std::move(p));
        }
      }
    }
  }
  return points;
}

}  // namespace pamda::cli
