#include "hypernets/gradcheck_suite.hpp"

#include <cmath>
#include <iomanip>
#include <map>

#include "hypernets/errors.hpp"
#include "hypernets/ops.hpp"
#include "hypernets/rng.hpp"

namespace hypernets {

namespace {

// Uniform values in [-1, -0.1] U [0.1, 1]: keeps relu inputs away from the
// kink so central differences stay valid.
Tensor random_signed(Rng& rng, Shape shape) {
  std::vector<double> v(numel(shape));
  for (double& x : v) {
    const double mag = rng.uniform(0.1, 1.0);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor(std::move(shape), std::move(v));
}

Tensor random_uniform(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Reduces an arbitrary tensor to a scalar with distinct fixed weights per
// coordinate, so a permuted or dropped coordinate cannot cancel out.
Tensor weighed(const Tensor& t, std::uint64_t salt) {
  Rng rng(mix_seed(salt, 0xabcdef));
  const int n = static_cast<int>(t.size());
  Tensor flat = reshape(t, {n});
  Tensor w = random_signed(rng, {n});
  return sum(hadamard(flat, w));
}

}  // namespace

std::vector<GradCheckCase> gradcheck_cases(std::uint64_t seed) {
  std::vector<GradCheckCase> cases;
  auto rng_for = [seed](std::uint64_t idx) { return Rng(mix_seed(seed, idx)); };

  {
    Rng rng = rng_for(1);
    cases.push_back({"matmul_2d_2d",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(matmul(in[0], in[1]), 1);
                     },
                     {random_signed(rng, {3, 4}), random_signed(rng, {4, 2})}});
  }
  {
    Rng rng = rng_for(2);
    cases.push_back({"matmul_2d_1d",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(matmul(in[0], in[1]), 2);
                     },
                     {random_signed(rng, {3, 5}), random_signed(rng, {5})}});
  }
  {
    Rng rng = rng_for(3);
    cases.push_back({"hadamard",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(hadamard(in[0], in[1]), 3);
                     },
                     {random_signed(rng, {2, 3}), random_signed(rng, {2, 3})}});
  }
  {
    Rng rng = rng_for(4);
    cases.push_back({"add",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(add(in[0], in[1]), 4);
                     },
                     {random_signed(rng, {4}), random_signed(rng, {4})}});
  }
  {
    Rng rng = rng_for(5);
    cases.push_back({"scale",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(scale(in[0], -1.7), 5);
                     },
                     {random_signed(rng, {3, 3})}});
  }
  {
    Rng rng = rng_for(6);
    cases.push_back({"concat",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(concat(in[0], in[1]), 6);
                     },
                     {random_signed(rng, {3}), random_signed(rng, {5})}});
  }
  {
    Rng rng = rng_for(7);
    cases.push_back({"reshape",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(reshape(in[0], {3, 2, 2}), 7);
                     },
                     {random_signed(rng, {4, 3})}});
  }
  {
    Rng rng = rng_for(8);
    cases.push_back({"sum",
                     [](Tape&, const std::vector<Tensor>& in) { return sum(in[0]); },
                     {random_signed(rng, {2, 5})}});
  }
  {
    Rng rng = rng_for(9);
    cases.push_back({"softmax_axis0",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(softmax(in[0], 0), 9);
                     },
                     {random_signed(rng, {4, 3})}});
  }
  {
    Rng rng = rng_for(10);
    cases.push_back({"softmax_axis1",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(softmax(in[0], 1), 10);
                     },
                     {random_signed(rng, {3, 4})}});
  }
  {
    Rng rng = rng_for(11);
    cases.push_back({"relu",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(apply_activation(in[0], Activation::Relu), 11);
                     },
                     {random_signed(rng, {3, 4})}});
  }
  {
    Rng rng = rng_for(12);
    cases.push_back({"tanh",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(apply_activation(in[0], Activation::Tanh), 12);
                     },
                     {random_signed(rng, {3, 4})}});
  }
  {
    Rng rng = rng_for(13);
    cases.push_back({"sigmoid",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(apply_activation(in[0], Activation::Sigmoid), 13);
                     },
                     {random_signed(rng, {3, 4})}});
  }
  {
    Rng rng = rng_for(14);
    cases.push_back({"conv2d_same_s1",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(conv2d(in[0], in[1], 1, Padding::Same), 14);
                     },
                     {random_signed(rng, {2, 5, 5}), random_signed(rng, {3, 2, 3, 3})}});
  }
  {
    Rng rng = rng_for(15);
    cases.push_back({"conv2d_same_s2",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(conv2d(in[0], in[1], 2, Padding::Same), 15);
                     },
                     {random_signed(rng, {2, 5, 6}), random_signed(rng, {3, 2, 3, 3})}});
  }
  {
    Rng rng = rng_for(16);
    cases.push_back({"conv2d_valid",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(conv2d(in[0], in[1], 1, Padding::Valid), 16);
                     },
                     {random_signed(rng, {2, 4, 5}), random_signed(rng, {2, 2, 2, 3})}});
  }
  {
    Rng rng = rng_for(17);
    cases.push_back({"conv2d_transpose_s2",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(conv2d_transpose(in[0], in[1], 2), 17);
                     },
                     {random_signed(rng, {3, 3, 3}), random_signed(rng, {3, 2, 3, 3})}});
  }
  {
    Rng rng = rng_for(18);
    cases.push_back({"conv2d_transpose_s1",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(conv2d_transpose(in[0], in[1], 1), 18);
                     },
                     {random_signed(rng, {2, 4, 4}), random_signed(rng, {2, 3, 3, 3})}});
  }
  {
    Rng rng = rng_for(19);
    cases.push_back({"channel_bias",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return weighed(channel_bias(in[0], in[1]), 19);
                     },
                     {random_signed(rng, {3, 2, 4}), random_signed(rng, {3})}});
  }
  {
    Rng rng = rng_for(20);
    cases.push_back({"mse_loss",
                     [](Tape&, const std::vector<Tensor>& in) {
                       return mse_loss(in[0], in[1]);
                     },
                     {random_uniform(rng, {3, 4}, 0.0, 1.0), random_uniform(rng, {3, 4}, 0.0, 1.0)}});
  }
  {
    // Fan-out: the same leaf feeds two branches, exercising additive
    // accumulation in the reverse sweep.
    Rng rng = rng_for(21);
    cases.push_back({"fanout_reuse",
                     [](Tape&, const std::vector<Tensor>& in) {
                       Tensor y = add(hadamard(in[0], in[0]), scale(in[0], 0.5));
                       return weighed(y, 21);
                     },
                     {random_signed(rng, {2, 3})}});
  }
  {
    // Composite path shaped like the modulated dense layer:
    // softmax(logits) ⊙ W, then matvec, bias, sigmoid, mse.
    Rng rng = rng_for(22);
    Tensor target = random_uniform(rng, {3}, 0.0, 1.0);
    cases.push_back({"modulated_dense_path",
                     [target](Tape&, const std::vector<Tensor>& in) {
                       Tensor w_eff = hadamard(softmax(in[1], 1), in[0]);
                       Tensor z = add(matmul(w_eff, in[2]), in[3]);
                       return mse_loss(apply_activation(z, Activation::Sigmoid), target);
                     },
                     {random_signed(rng, {3, 4}), random_signed(rng, {3, 4}),
                      random_signed(rng, {4}), random_signed(rng, {3})}});
  }
  return cases;
}

std::vector<std::string> registered_ops() {
  return {"matmul",  "hadamard", "add",  "scale",   "concat", "reshape",        "sum",
          "softmax", "relu",     "tanh", "sigmoid", "conv2d", "conv2d_transpose",
          "channel_bias", "mse_loss"};
}

std::string case_primary_op(const std::string& case_name) {
  static const std::map<std::string, std::string> kOpForCase = {
      {"matmul_2d_2d", "matmul"},
      {"matmul_2d_1d", "matmul"},
      {"hadamard", "hadamard"},
      {"add", "add"},
      {"scale", "scale"},
      {"concat", "concat"},
      {"reshape", "reshape"},
      {"sum", "sum"},
      {"softmax_axis0", "softmax"},
      {"softmax_axis1", "softmax"},
      {"relu", "relu"},
      {"tanh", "tanh"},
      {"sigmoid", "sigmoid"},
      {"conv2d_same_s1", "conv2d"},
      {"conv2d_same_s2", "conv2d"},
      {"conv2d_valid", "conv2d"},
      {"conv2d_transpose_s2", "conv2d_transpose"},
      {"conv2d_transpose_s1", "conv2d_transpose"},
      {"channel_bias", "channel_bias"},
      {"mse_loss", "mse_loss"},
      {"fanout_reuse", "circuit"},
      {"modulated_dense_path", "circuit"},
  };
  auto it = kOpForCase.find(case_name);
  if (it == kOpForCase.end()) throw ContractError("unknown gradient-check case: " + case_name);
  return it->second;
}

std::vector<GradCheckReport> run_gradcheck(std::ostream* log, std::uint64_t seed) {
  std::vector<GradCheckReport> reports;
  for (const GradCheckCase& c : gradcheck_cases(seed)) {
    const GradCheckResult r = grad_check(c.fn, c.inputs, c.eps);
    GradCheckReport rep{c.name, r.max_rel_error, c.tol, r.max_rel_error <= c.tol};
    if (log) {
      (*log) << (rep.pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(24) << rep.name
             << "max rel err " << std::scientific << std::setprecision(3) << rep.max_rel_error
             << "  (tol " << rep.tol << ")\n" << std::defaultfloat;
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace hypernets
