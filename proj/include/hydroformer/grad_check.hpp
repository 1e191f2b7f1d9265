#pragma once

#include <functional>
#include <vector>

#include "hydroformer/tensor.hpp"

namespace hydro {

struct GradCheckReport {
  real max_rel_error = 0;
  real max_abs_error = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  bool passed = false;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares tape gradients of a scalar-valued `fn` with central differences
/// (f(x+eps) - f(x-eps)) / 2eps, one coordinate at a time over every input.
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-3),
/// so vanishing gradients are judged on absolute error.
GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, real eps = real(1e-5),
                           real tol = real(1e-4));

}  // namespace hydro
