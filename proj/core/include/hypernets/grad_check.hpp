#pragma once

#include <functional>
#include <vector>

#include "hypernets/tape.hpp"
#include "hypernets/tensor.hpp"

namespace hypernets {

// A differentiable scalar function of several tensors.  The function must
// route every tensor it is handed through the supplied tape (the checker
// re-registers the inputs as leaves on a fresh tape for every probe).
using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;   // worst coordinate across all inputs
  double worst_analytic = 0.0;  // analytic value at the worst coordinate
  double worst_numeric = 0.0;   // central-difference value at the worst coordinate
  int worst_input = -1;
  std::size_t worst_coord = 0;
};

// Compares reverse-mode gradients of `f` against central differences at the
// given point.  Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                           double eps = 1e-5);

}  // namespace hypernets
