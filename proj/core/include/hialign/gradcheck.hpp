#pragma once

#include <functional>

#include "hialign/matrix.hpp"

namespace hialign {

using ScalarFn = std::function<double(const Matrix&)>;

// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h for every
// coordinate of x. Throws NumericError if any evaluation is non-finite.
Matrix finite_diff_grad(const ScalarFn& f, const Matrix& x, double h = 1e-5);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps coordinates
// whose true gradient is ~0 from dominating through round-off.
double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-6);

}  // namespace hialign
