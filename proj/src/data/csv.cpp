#include "pamda/data/csv.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "pamda/errors.hpp"
#include "pamda/format.hpp"

namespace pamda::data {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

struct RawDomain {
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<long long> labels;  // 0 marks an empty cell
  std::size_t rows = 0;
  bool any_label = false;
  bool any_missing = false;
};

RawDomain read_raw(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string where = path.string();

  std::string line;
  if (!std::getline(in, line) || line.empty()) throw SchemaError(where + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  if (header.size() < 2 || header.back() != "label") {
    throw SchemaError(where + ": header must be f1,...,fD,label");
  }
  RawDomain raw;
  raw.dim = header.size() - 1;
  for (std::size_t c = 0; c < raw.dim; ++c) {
    if (header[c] != "f" + std::to_string(c + 1)) {
      throw SchemaError(where + ": unexpected header column '" + std::string(header[c]) + "'");
    }
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != raw.dim + 1) {
      throw SchemaError(where + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(raw.dim + 1) + " columns, found " +
                        std::to_string(cells.size()));
    }
    const std::string ctx = where + ":" + std::to_string(line_no);
    for (std::size_t c = 0; c < raw.dim; ++c) raw.values.push_back(parse_double(cells[c], ctx));
    if (cells.back().empty()) {
      raw.labels.push_back(0);
      raw.any_missing = true;
    } else {
      const long long y = parse_integer(cells.back(), ctx);
      if (y < 1) throw SchemaError(ctx + ": label " + std::to_string(y) + " is not positive");
      raw.labels.push_back(y);
      raw.any_label = true;
    }
    ++raw.rows;
  }
  if (raw.rows == 0) throw SchemaError(where + ": no samples");
  return raw;
}

Tensor to_tensor(RawDomain& raw) { return Tensor(raw.rows, raw.dim, std::move(raw.values)); }

std::vector<int> to_labels(const RawDomain& raw) {
  std::vector<int> ys;
  ys.reserve(raw.labels.size());
  for (long long y : raw.labels) ys.push_back(static_cast<int>(y - 1));
  return ys;
}

}  // namespace

void write_domain_csv(const fs::path& path, const Tensor& features,
                      const std::optional<std::vector<int>>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t c = 0; c < features.cols(); ++c) out << 'f' << (c + 1) << ',';
  out << "label\n";
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < features.cols(); ++c) out << format_double(features(r, c)) << ',';
    if (labels) out << ((*labels)[r] + 1);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<fs::path> write_dataset_csv(const MultiDomainDataset& dataset, const fs::path& dir,
                                        bool include_target_labels) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  for (std::size_t j = 0; j < dataset.num_sources(); ++j) {
    auto path = dir / (DomainId::source(j).name() + ".csv");
    write_domain_csv(path, dataset.source(j).features, dataset.source(j).labels);
    written.push_back(path);
  }
  std::optional<std::vector<int>> target_labels;
  if (include_target_labels && dataset.has_target_labels()) {
    target_labels = dataset.target_labels(EvaluationAccess{});
  }
  auto path = dir / "target.csv";
  write_domain_csv(path, dataset.target_features(), target_labels);
  written.push_back(path);
  return written;
}

MultiDomainDataset load_csv_dataset(const std::vector<fs::path>& source_paths,
                                    const fs::path& target_path) {
  if (source_paths.size() < 2) throw SchemaError("need at least 2 source files");
  std::vector<RawDomain> sources;
  for (const auto& p : source_paths) sources.push_back(read_raw(p));
  RawDomain target = read_raw(target_path);

  const std::size_t dim = sources.front().dim;
  long long max_label = 0;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    if (sources[j].dim != dim) {
      throw SchemaError(source_paths[j].string() + ": " + std::to_string(sources[j].dim) +
                        " feature columns, expected " + std::to_string(dim));
    }
    if (sources[j].any_missing) {
      throw SchemaError(source_paths[j].string() + ": source file has rows without a label");
    }
    max_label = std::max(max_label, *std::max_element(sources[j].labels.begin(),
                                                      sources[j].labels.end()));
  }
  if (target.dim != dim) {
    throw SchemaError(target_path.string() + ": " + std::to_string(target.dim) +
                      " feature columns, expected " + std::to_string(dim));
  }
  if (target.any_label && target.any_missing) {
    throw SchemaError(target_path.string() + ": target labels must be all present or all empty");
  }
  if (target.any_label) {
    max_label = std::max(max_label, *std::max_element(target.labels.begin(), target.labels.end()));
  }

  const int K = static_cast<int>(max_label);
  std::vector<LabeledSamples> labeled;
  for (auto& raw : sources) {
    auto ys = to_labels(raw);
    labeled.push_back({to_tensor(raw), std::move(ys)});
  }
  std::optional<std::vector<int>> target_labels;
  if (target.any_label) target_labels = to_labels(target);
  return MultiDomainDataset(std::move(labeled), to_tensor(target), std::move(target_labels), K);
}

}  // namespace pamda::data
