#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace masscrf {

// One finite-difference check: an operator (or composite objective) run over
// several random instances, reporting the worst relative error seen.
struct CheckReport {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  int reps = 0;
  bool pass = false;
};

// Runs every registered check whose name contains `op_filter` (empty = all).
// Analytic tape gradients are compared against central finite differences
// (h = 1e-5); the error metric is |analytic - fd|_inf normalized by the
// larger gradient magnitude. Composite objectives subsample coordinates of
// large parameter tensors; primitive ops check every coordinate.
std::vector<CheckReport> run_gradcheck(std::uint64_t seed, const std::string& op_filter = "");

bool all_passed(const std::vector<CheckReport>& reports);

}  // namespace masscrf
