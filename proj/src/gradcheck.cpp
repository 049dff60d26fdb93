#include "lai/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace lai {

GradCheckReport grad_check(const ScalarFn& f,
                           std::vector<Tensor<double>> inputs, double eps) {
  auto& tape = Tape<double>::current();

  // analytic pass on a clean tape
  tape.clear();
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor<double> y = f(inputs);
  if (y.numel() != 1) throw ContractError("grad_check: f must return a scalar");
  backward(y);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) {
    if (t.has_grad())
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    else
      analytic.emplace_back(t.numel(), 0.0);
  }
  tape.clear();

  GradCheckReport report;
  {
    NoGradGuard ng;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      auto vals = inputs[i].data();
      for (std::size_t j = 0; j < vals.size(); ++j) {
        const double orig = vals[j];
        vals[j] = orig + eps;
        const double fp = f(inputs).item();
        vals[j] = orig - eps;
        const double fm = f(inputs).item();
        vals[j] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic[i][j];
        const double rel = std::abs(a - numeric) /
                           std::max({std::abs(a), std::abs(numeric), 1e-8});
        if (rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst_input = i;
          report.worst_element = j;
        }
      }
    }
  }
  return report;
}

}  // namespace lai
