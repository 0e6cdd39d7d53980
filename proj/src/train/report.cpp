#include "pamda/train/report.hpp"

#include <chrono>
#include <ctime>
#include <set>
#include <string>

#include "pamda/errors.hpp"

namespace pamda::train {

using data::DomainId;
using diffcore::Tensor;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void read_unsigned(const json& j, const char* key, std::size_t& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  }
  out = v.get<std::size_t>();
}

void read_number(const json& j, const char* key, double& out) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
  out = j.at(key).get<double>();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json config_to_json(const TrainConfig& c) {
  return json{
      {"batch_size", c.batch_size},
      {"rounds", c.rounds},
      {"iters_per_round", c.iters_per_round},
      {"learning_rate", c.learning_rate},
      {"eta", c.eta},
      {"tau_c", c.tau_c},
      {"tau_d", c.tau_d},
      {"seed", c.seed},
      {"use_dc", c.ablation.use_dc},
      {"use_dd", c.ablation.use_dd},
      {"use_proto_cls", c.ablation.use_proto_cls},
      {"divisor_mode",
       c.divisor_mode == proto::DivisorMode::ClusterSize ? "cluster_size" : "batch_size"},
      {"normalize_by_k", c.normalize_by_k},
      {"kernel_sigma", c.kernel.is_median() ? json("median") : json(*c.kernel.sigma)},
      {"gamma_override", optional_number(c.gamma_override)},
      {"hidden_dims", c.hidden_dims},
      {"embedding_dim", c.embedding_dim},
      {"classifier_hidden", c.classifier_hidden},
  };
}

TrainConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"batch_size", "rounds", "iters_per_round", "learning_rate", "eta", "tau_c",
                  "tau_d", "seed", "use_dc", "use_dd", "use_proto_cls", "divisor_mode",
                  "normalize_by_k", "kernel_sigma", "gamma_override", "hidden_dims",
                  "embedding_dim", "classifier_hidden"},
                 "train");
  TrainConfig c;
  read_unsigned(j, "batch_size", c.batch_size);
  read_unsigned(j, "rounds", c.rounds);
  read_unsigned(j, "iters_per_round", c.iters_per_round);
  read_number(j, "learning_rate", c.learning_rate);
  read_number(j, "eta", c.eta);
  read_number(j, "tau_c", c.tau_c);
  read_number(j, "tau_d", c.tau_d);
  if (j.contains("seed")) {
    std::size_t seed = 0;
    read_unsigned(j, "seed", seed);
    c.seed = seed;
  }
  read(j, "use_dc", c.ablation.use_dc);
  read(j, "use_dd", c.ablation.use_dd);
  read(j, "use_proto_cls", c.ablation.use_proto_cls);
  if (j.contains("divisor_mode")) {
    std::string mode;
    read(j, "divisor_mode", mode);
    if (mode == "cluster_size") {
      c.divisor_mode = proto::DivisorMode::ClusterSize;
    } else if (mode == "batch_size") {
      c.divisor_mode = proto::DivisorMode::BatchSize;
    } else {
      throw ConfigError("divisor_mode must be 'cluster_size' or 'batch_size'");
    }
  }
  read(j, "normalize_by_k", c.normalize_by_k);
  if (j.contains("kernel_sigma")) {
    const json& v = j.at("kernel_sigma");
    if (v.is_string() && v.get<std::string>() == "median") {
      c.kernel = disc::KernelSpec::median();
    } else if (v.is_number()) {
      c.kernel = disc::KernelSpec::fixed(v.get<double>());
    } else {
      throw ConfigError("kernel_sigma must be \"median\" or a positive number");
    }
  }
  if (j.contains("gamma_override") && !j.at("gamma_override").is_null()) {
    double g = 0.0;
    read_number(j, "gamma_override", g);
    c.gamma_override = g;
  }
  if (j.contains("hidden_dims")) {
    const json& v = j.at("hidden_dims");
    if (!v.is_array()) throw ConfigError("hidden_dims must be an array");
    c.hidden_dims.clear();
    for (const auto& h : v) {
      if (!h.is_number_integer() || h.get<long long>() <= 0) {
        throw ConfigError("hidden_dims entries must be positive integers");
      }
      c.hidden_dims.push_back(h.get<std::size_t>());
    }
  }
  read_unsigned(j, "embedding_dim", c.embedding_dim);
  read_unsigned(j, "classifier_hidden", c.classifier_hidden);
  c.validate();
  return c;
}

json record_to_json(const IterationRecord& r) {
  json j{
      {"iteration", r.iteration},
      {"round", r.round},
      {"loss_source", r.loss_source},
      {"loss_proto", optional_number(r.loss_proto)},
      {"loss_cls", r.loss_cls},
      {"d_class", optional_number(r.d_class)},
      {"d_domain", optional_number(r.d_domain)},
      {"d_total", r.d_total},
      {"alpha", r.alpha},
      {"gamma", r.gamma},
      {"source_accuracy", r.source_accuracy},
      {"n_high", r.n_high},
      {"n_low", r.n_low},
      {"d_class_skipped", r.d_class_skipped},
      {"d_domain_skipped", r.d_domain_skipped},
      {"sigma", r.sigma},
  };
  if (r.class_weights) {
    const auto& cw = *r.class_weights;
    json rows = json::array();
    for (std::size_t s = 0; s < cw.w.rows(); ++s) {
      auto row = cw.w.row(s);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    std::vector<bool> present(cw.present.begin(), cw.present.end());
    j["class_weights"] = {{"tau_c", cw.tau_c}, {"present", present}, {"w", rows}};
  } else {
    j["class_weights"] = nullptr;
  }
  if (r.domain_weights) {
    j["domain_weights"] = {{"tau_d", r.domain_weights->tau_d}, {"e", r.domain_weights->e}};
  } else {
    j["domain_weights"] = nullptr;
  }
  return j;
}

json bank_to_json(const PrototypeBank& bank) {
  json slots = json::array();
  auto emit = [&](DomainId domain) {
    for (int k = 0; k < bank.num_classes(); ++k) {
      auto raw = bank.raw_slot(domain, k);
      slots.push_back({{"domain", domain.name()},
                       {"class", k + 1},
                       {"initialized", bank.initialized(domain, k)},
                       {"values", std::vector<double>(raw.begin(), raw.end())}});
    }
  };
  for (std::size_t j = 0; j < bank.num_sources(); ++j) emit(DomainId::source(j));
  emit(DomainId::target());
  return {{"num_sources", bank.num_sources()},
          {"num_classes", bank.num_classes()},
          {"dim", bank.dim()},
          {"eta", bank.eta()},
          {"slots", slots}};
}

PrototypeBank bank_from_json(const json& j) {
  try {
    PrototypeBank bank(j.at("num_sources").get<std::size_t>(), j.at("num_classes").get<int>(),
                       j.at("dim").get<std::size_t>(), j.at("eta").get<double>());
    for (const auto& slot : j.at("slots")) {
      if (!slot.at("initialized").get<bool>()) continue;
      const std::string name = slot.at("domain").get<std::string>();
      DomainId domain = DomainId::target();
      if (name != "target") {
        if (name.rfind("source_", 0) != 0) throw SchemaError("bad prototype domain '" + name + "'");
        domain = DomainId::source(std::stoul(name.substr(7)) - 1);
      }
      const auto values = slot.at("values").get<std::vector<double>>();
      bank.restore(domain, slot.at("class").get<int>() - 1, values);
    }
    return bank;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed prototype bank: ") + e.what());
  } catch (const std::logic_error& e) {
    throw SchemaError(std::string("malformed prototype bank: ") + e.what());
  } catch (const ContractViolation& e) {
    throw SchemaError(std::string("malformed prototype bank: ") + e.what());
  }
}

json report_to_json(const TrainReport& report) {
  json iterations = json::array();
  for (const auto& r : report.iterations) iterations.push_back(record_to_json(r));
  return json{
      {"schema_version", kReportSchemaVersion},
      {"generated_at", utc_timestamp()},
      {"config", {{"train", config_to_json(report.config)}}},
      {"iterations", std::move(iterations)},
      {"target_accuracy", report.round_accuracy},
      {"final_target_accuracy",
       report.round_accuracy.empty() ? json(nullptr) : json(report.round_accuracy.back())},
      {"fault", report.fault ? json(*report.fault) : json(nullptr)},
  };
}

json canonical_report(json report) {
  report.erase("generated_at");
  return report;
}

std::vector<disc::WeightSnapshot> weight_snapshots_from_report(const json& report) {
  std::vector<disc::WeightSnapshot> out;
  try {
    for (const auto& rec : report.at("iterations")) {
      disc::WeightSnapshot snap;
      snap.iteration = rec.at("iteration").get<std::size_t>();
      const json& cw = rec.at("class_weights");
      if (!cw.is_null()) {
        const auto rows = cw.at("w").get<std::vector<std::vector<double>>>();
        const auto present = cw.at("present").get<std::vector<bool>>();
        if (rows.empty() || rows.front().size() != present.size()) {
          throw SchemaError("class weight matrix does not match its presence mask");
        }
        Tensor w(rows.size(), present.size());
        for (std::size_t s = 0; s < rows.size(); ++s) {
          if (rows[s].size() != present.size()) throw SchemaError("ragged class weight matrix");
          for (std::size_t k = 0; k < present.size(); ++k) w(s, k) = rows[s][k];
        }
        snap.class_weights = disc::ClassWeights{std::move(w), present, cw.at("tau_c").get<double>()};
      }
      const json& dw = rec.at("domain_weights");
      if (!dw.is_null()) {
        snap.domain_weights =
            disc::DomainWeights{dw.at("e").get<std::vector<double>>(), dw.at("tau_d").get<double>()};
      }
      if (snap.class_weights || snap.domain_weights) out.push_back(std::move(snap));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed report: ") + e.what());
  }
  return out;
}

}  // namespace pamda::train
