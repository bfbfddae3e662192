#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dualres {

struct CheckResult {
  std::string name;
  double max_rel = 0;
  int instances = 0;
  bool pass = false;
};

// Central finite differences vs reverse-mode gradients for every tape op,
// probed through a fixed random linear functional of the output.
std::vector<CheckResult> gradcheck_ops(uint64_t seed, int instances = 20,
                                       double eps = 1e-3, double tol = 1e-4);

// Same comparison for the full joint loss of a micro model, perturbing every
// parameter scalar of every tensor.
CheckResult gradcheck_loss(uint64_t seed, int instances = 20, double eps = 1e-3,
                           double tol = 1e-4);

// Ops plus the full-loss check in one list.
std::vector<CheckResult> gradcheck_all(uint64_t seed, int instances = 20,
                                       double eps = 1e-3, double tol = 1e-4);

}  // namespace dualres
