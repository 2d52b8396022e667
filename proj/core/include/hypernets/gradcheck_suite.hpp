#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "hypernets/grad_check.hpp"

namespace hypernets {

// One scenario: a scalar-valued function built from exactly one op under
// test (plus fixed-weight reductions), with inputs chosen away from any
// nondifferentiable points.
struct GradCheckCase {
  std::string name;
  ScalarFn fn;
  std::vector<Tensor> inputs;
  double eps = 1e-5;
  double tol = 1e-6;
};

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Every differentiable op appears in at least one case.
std::vector<GradCheckCase> gradcheck_cases(std::uint64_t seed = 42);

// The full vocabulary of op names the tape can record, for coverage reports.
std::vector<std::string> registered_ops();

// The single op a case primarily exercises, or "circuit" for composite
// cases that chain several ops. Unknown case names throw ContractError.
std::string case_primary_op(const std::string& case_name);

// Runs all cases; optionally logs one line per case to `log`.
// Returns reports in case order.
std::vector<GradCheckReport> run_gradcheck(std::ostream* log = nullptr, std::uint64_t seed = 42);

}  // namespace hypernets
