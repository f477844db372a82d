#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relchain/tensor.hpp"

namespace relchain {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool ok(double tol = 1e-4) const { return max_rel_err <= tol; }
};

// Compares tape gradients of a scalar-valued forward against central finite
// differences. `forward` must rebuild the computation from the current leaf
// values on every call. Checks at most max_entries entries per leaf
// (negative means all). Returns the worst relative error.
double check_gradients(const std::function<Tensor(Tape*)>& forward, std::vector<Tensor> leaves,
                       int max_entries = -1, double step = 1e-5);

// Finite-difference suite over every tensor op, `reps` random shapes and
// values per op.
std::vector<GradCheckResult> gradcheck_ops(int reps = 20, uint64_t seed = 42);

// End-to-end checks: one tiny instance batch per model variant, gradients of
// the loss wrt every parameter.
std::vector<GradCheckResult> gradcheck_models(uint64_t seed = 42);

}  // namespace relchain
