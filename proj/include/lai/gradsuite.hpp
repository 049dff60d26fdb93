#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lai {

struct OpCheckResult {
  std::string op;
  double max_rel_err = 0.0;
};

inline constexpr double kGradCheckTol = 1e-4;

// Runs the finite-difference check for every autodiff op plus the masked
// combined loss through a depth-1 dual-encoder model, aggregating the max
// relative error per op across seeds. corrupt_conv2d is a negative-control
// fixture that deliberately breaks the conv2d backward path.
std::vector<OpCheckResult> run_gradcheck_suite(
    const std::vector<std::uint64_t>& seeds, bool corrupt_conv2d = false);

bool gradcheck_suite_passed(const std::vector<OpCheckResult>& results,
                            double tol = kGradCheckTol);

}  // namespace lai
