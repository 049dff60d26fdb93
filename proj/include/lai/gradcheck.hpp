#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lai/tensor.hpp"

namespace lai {

// Scalar-valued function of a set of tensors, in 64-bit precision.
using ScalarFn =
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  // (input index, element index) of the worst element, for diagnostics
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
};

// Compares tape gradients of f against central finite differences
// (f(x+eps) - f(x-eps)) / (2 eps) for every element of every input.
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// f must be smooth at the evaluation point (keep relu inputs away from 0).
GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor<double>> inputs,
                           double eps);

}  // namespace lai
