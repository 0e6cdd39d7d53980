#include "pamda/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "pamda/errors.hpp"
#include "pamda/format.hpp"

namespace pamda::model {

namespace {

DenseLayer make_layer(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  DenseLayer layer{Tensor(fan_in, fan_out), Tensor(1, fan_out)};
  for (double& w : layer.weight.data()) w = dist(rng);
  return layer;
}

Var affine(const BoundModel::Layer& layer, Var x) {
  return diffcore::add(diffcore::matmul(x, layer.weight), layer.bias);
}

void require_cols(const Tensor& x, std::size_t expected, const char* what) {
  if (x.cols() != expected) {
    throw ContractViolation(std::string(what) + ": expected " + std::to_string(expected) +
                            " columns, got " + std::to_string(x.cols()));
  }
}

}  // namespace

void ModelParams::validate() const {
  if (extractor.empty()) throw ContractViolation("model has no extractor layers");
  auto check = [](const DenseLayer& l, const std::string& name) {
    if (l.bias.rows() != 1 || l.bias.cols() != l.fan_out()) {
      throw ContractViolation(name + ": bias shape " + l.bias.shape_string() +
                              " does not match weight " + l.weight.shape_string());
    }
    if (!l.weight.all_finite() || !l.bias.all_finite()) {
      throw ContractViolation(name + ": non-finite parameter");
    }
  };
  for (std::size_t i = 0; i < extractor.size(); ++i) {
    check(extractor[i], "extractor layer " + std::to_string(i));
    if (i > 0 && extractor[i].fan_in() != extractor[i - 1].fan_out()) {
      throw ContractViolation("extractor layer " + std::to_string(i) + " does not chain");
    }
  }
  check(classifier[0], "classifier layer 0");
  check(classifier[1], "classifier layer 1");
  if (classifier[0].fan_in() != embedding_dim() ||
      classifier[1].fan_in() != classifier[0].fan_out()) {
    throw ContractViolation("classifier layers do not chain from the embedding dimension");
  }
}

ModelParams init_model(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_dim == 0 || arch.embedding_dim == 0 || arch.classifier_hidden == 0 ||
      arch.num_classes < 1 ||
      std::any_of(arch.hidden.begin(), arch.hidden.end(), [](std::size_t h) { return h == 0; })) {
    throw ConfigError("model dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  ModelParams params;
  std::size_t fan_in = arch.input_dim;
  for (std::size_t width : arch.hidden) {
    params.extractor.push_back(make_layer(fan_in, width, rng));
    fan_in = width;
  }
  params.extractor.push_back(make_layer(fan_in, arch.embedding_dim, rng));
  params.classifier[0] = make_layer(arch.embedding_dim, arch.classifier_hidden, rng);
  params.classifier[1] =
      make_layer(arch.classifier_hidden, static_cast<std::size_t>(arch.num_classes), rng);
  return params;
}

BoundModel bind_parameters(Graph& graph, const ModelParams& params) {
  BoundModel bound;
  for (const auto& layer : params.extractor) {
    bound.extractor.push_back({graph.parameter(layer.weight), graph.parameter(layer.bias)});
  }
  for (std::size_t i = 0; i < 2; ++i) {
    bound.classifier[i] = {graph.parameter(params.classifier[i].weight),
                           graph.parameter(params.classifier[i].bias)};
  }
  return bound;
}

Var extract_features(const BoundModel& model, Var inputs) {
  require_cols(inputs.value(), model.extractor.front().weight.value().rows(), "extract_features");
  Var h = inputs;
  for (const auto& layer : model.extractor) h = diffcore::tanh(affine(layer, h));
  return h;
}

Var classify(const BoundModel& model, Var embeddings) {
  require_cols(embeddings.value(), model.classifier[0].weight.value().rows(), "classify");
  Var hidden = diffcore::tanh(affine(model.classifier[0], embeddings));
  return affine(model.classifier[1], hidden);
}

Var predict_probs(const BoundModel& model, Var inputs) {
  return diffcore::softmax_rows(classify(model, extract_features(model, inputs)));
}

Tensor extract_features(const ModelParams& params, const Tensor& inputs) {
  Graph g;
  auto bound = bind_parameters(g, params);
  return extract_features(bound, g.constant(inputs)).value();
}

Tensor classify(const ModelParams& params, const Tensor& embeddings) {
  Graph g;
  auto bound = bind_parameters(g, params);
  return classify(bound, g.constant(embeddings)).value();
}

Tensor predict_probs(const ModelParams& params, const Tensor& inputs) {
  Graph g;
  auto bound = bind_parameters(g, params);
  return predict_probs(bound, g.constant(inputs)).value();
}

std::vector<int> predict_labels(const ModelParams& params, const Tensor& inputs) {
  const Tensor probs = predict_probs(params, inputs);
  std::vector<int> labels(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    labels[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return labels;
}

// Format:
//   pamda-checkpoint 1
//   extractor <L>
//   layer <fan_in> <fan_out>
//   weight <fan_in*fan_out values, row-major>
//   bias <fan_out values>
//   ... (L layers)
//   classifier 2
//   ... (2 layers)
//   end
std::string to_checkpoint_text(const ModelParams& params) {
  params.validate();
  std::ostringstream out;
  auto write_values = [&](const char* tag, const Tensor& t) {
    out << tag;
    for (double v : t.data()) out << ' ' << format_double(v);
    out << '\n';
  };
  auto write_layer = [&](const DenseLayer& l) {
    out << "layer " << l.fan_in() << ' ' << l.fan_out() << '\n';
    write_values("weight", l.weight);
    write_values("bias", l.bias);
  };
  out << "pamda-checkpoint 1\n";
  out << "extractor " << params.extractor.size() << '\n';
  for (const auto& l : params.extractor) write_layer(l);
  out << "classifier 2\n";
  for (const auto& l : params.classifier) write_layer(l);
  out << "end\n";
  return out.str();
}

ModelParams from_checkpoint_text(const std::string& text) {
  std::istringstream in(text);
  auto expect_word = [&](const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) {
      throw SchemaError("checkpoint: expected '" + word + "', found '" + got + "'");
    }
  };
  auto read_count = [&](const char* what) -> std::size_t {
    std::string tok;
    if (!(in >> tok)) throw SchemaError(std::string("checkpoint: missing ") + what);
    const long long v = parse_integer(tok, std::string("checkpoint ") + what);
    if (v <= 0 || v > 1'000'000) {
      throw SchemaError(std::string("checkpoint: invalid ") + what + " " + tok);
    }
    return static_cast<std::size_t>(v);
  };
  auto read_values = [&](const char* tag, std::size_t rows, std::size_t cols) {
    expect_word(tag);
    std::vector<double> values(rows * cols);
    for (double& v : values) {
      std::string tok;
      if (!(in >> tok)) throw SchemaError(std::string("checkpoint: truncated ") + tag);
      v = parse_double(tok, std::string("checkpoint ") + tag);
    }
    return Tensor(rows, cols, std::move(values));
  };
  auto read_layer = [&]() {
    expect_word("layer");
    const std::size_t fan_in = read_count("fan_in");
    const std::size_t fan_out = read_count("fan_out");
    DenseLayer l;
    l.weight = read_values("weight", fan_in, fan_out);
    l.bias = read_values("bias", 1, fan_out);
    return l;
  };

  expect_word("pamda-checkpoint");
  expect_word("1");
  expect_word("extractor");
  const std::size_t n_extractor = read_count("extractor layer count");
  ModelParams params;
  for (std::size_t i = 0; i < n_extractor; ++i) params.extractor.push_back(read_layer());
  expect_word("classifier");
  expect_word("2");
  params.classifier[0] = read_layer();
  params.classifier[1] = read_layer();
  expect_word("end");
  std::string trailing;
  if (in >> trailing) throw SchemaError("checkpoint: unexpected trailing content");
  try {
    params.validate();
  } catch (const ContractViolation& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << to_checkpoint_text(params);
  if (!out) throw IoError("write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_checkpoint_text(buf.str());
}

}  // namespace pamda::model
