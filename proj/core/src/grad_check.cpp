#include "hypernets/grad_check.hpp"

#include <cmath>

#include "hypernets/errors.hpp"

namespace hypernets {

namespace {

double eval_at(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  return f(tape, leaves).item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps) {
  if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");

  // Analytic pass.
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  Tensor loss = f(tape, leaves);
  tape.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const Tensor& leaf : leaves) analytic.push_back(tape.grad(leaf));

  GradCheckResult result;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    const Tensor& base = inputs[which];
    for (std::size_t coord = 0; coord < base.size(); ++coord) {
      std::vector<Tensor> probe = inputs;
      std::vector<double> bumped(base.values());

      bumped[coord] = base.at(coord) + eps;
      probe[which] = Tensor(base.shape(), bumped);
      const double hi = eval_at(f, probe);

      bumped[coord] = base.at(coord) - eps;
      probe[which] = Tensor(base.shape(), bumped);
      const double lo = eval_at(f, probe);

      const double numeric = (hi - lo) / (2.0 * eps);
      const double a = analytic[which].at(coord);
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
        result.worst_input = static_cast<int>(which);
        result.worst_coord = coord;
      }
    }
  }
  return result;
}

}  // namespace hypernets
