#pragma once

#include <functional>

#include "pamda/diffcore/tensor.hpp"

namespace pamda::diffcore {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient of a scalar function, one coordinate at a
/// time. Throws NumericFault if any probe returns a non-finite value.
Tensor finite_diff_grad(const ScalarFn& fn, const Tensor& point, double epsilon = 1e-5);

/// ||a - b|| / max(||a||, ||b||, floor) in the Euclidean norm. The floor keeps
/// an all-but-zero gradient from turning rounding noise into a large ratio.
double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace pamda::diffcore
