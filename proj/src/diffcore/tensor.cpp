#include "pamda/diffcore/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "pamda/errors.hpp"

namespace pamda::diffcore {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) {
    throw ContractViolation("tensor dimensions must be positive");
  }
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) {
    throw ContractViolation("tensor dimensions must be positive");
  }
  if (data_.size() != rows * cols) {
    throw ContractViolation("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_string());
  }
}

Tensor Tensor::row_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) {
    throw ContractViolation("item() on non-scalar tensor of shape " + shape_string());
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

}  // namespace pamda::diffcore
