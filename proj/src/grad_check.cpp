#include "hydroformer/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace hydro {

GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, real eps, real tol) {
  std::vector<std::vector<real>> analytic;
  {
    for (auto& t : inputs) {
      t.set_requires_grad(true);
      t.zero_grad();
    }
    Tape tape;
    Tensor y = fn(inputs);
    tape.backward(y);
    for (auto& t : inputs) analytic.push_back(t.grad());
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    auto values = inputs[which].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const real saved = values[i];
      values[i] = saved + eps;
      const real up = fn(inputs).item();
      values[i] = saved - eps;
      const real down = fn(inputs).item();
      values[i] = saved;

      const real numeric = (up - down) / (2 * eps);
      const real a = analytic[which][i];
      const real abs_err = std::abs(a - numeric);
      const real rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), real(1e-3)});
      if (rel_err > report.max_rel_error) {
        report.max_rel_error = rel_err;
        report.worst_input = which;
        report.worst_index = i;
      }
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      ++report.coordinates;
    }
  }
  for (auto& t : inputs) t.zero_grad();
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace hydro
