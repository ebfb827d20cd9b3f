#include "hialign/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hialign/errors.hpp"

namespace hialign {

Matrix finite_diff_grad(const ScalarFn& f, const Matrix& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff_grad: step must be positive");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  auto values = probe.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + h;
    const double plus = f(probe);
    values[i] = original - h;
    const double minus = f(probe);
    values[i] = original;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
    }
    grad.values()[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor) {
  require_same_shape(analytic, numeric, "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.values()[i];
    const double n = numeric.values()[i];
    const double scale = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / scale);
  }
  return worst;
}

}  // namespace hialign
