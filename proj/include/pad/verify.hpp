#pragma once

// Self-contained oracle suites run by `pad verify`.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pad {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 20240601;
  // adds a perturbation to every analytic gradient (negative control)
  bool corrupt_gradient = false;
};

std::vector<std::string> verify_suite_names();

// Runs every suite, or only `only` when nonempty (InvalidInput if unknown).
std::vector<SuiteResult> run_verify(std::string_view only, const VerifyOptions& options);

// Gradients smaller than this are compared in absolute terms; a finite
// difference of an exactly-zero gradient is pure roundoff.
inline constexpr double kGradientFloor = 1e-4;

// max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|, kGradientFloor).
double gradient_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

}  // namespace pad
