#include "pamda/diffcore/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pamda/errors.hpp"

namespace pamda::diffcore {

Tensor finite_diff_grad(const ScalarFn& fn, const Tensor& point, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractViolation("finite_diff_grad: epsilon must be positive");
  Tensor grad(point.rows(), point.cols());
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x = point[i];
    probe[i] = x + epsilon;
    const double up = fn(probe);
    probe[i] = x - epsilon;
    const double down = fn(probe);
    probe[i] = x;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericFault("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

double relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (!a.same_shape(b)) throw ContractViolation("relative_error: shape mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

}  // namespace pamda::diffcore
