// Command-line harness: gradient checking, dataset generation, training
// runs, evaluation, and comparison-grid rendering. Exit codes are a stable
// contract: 0 success, 1 check failure, 2 input/config error, 3 divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hypernets/dataset.hpp"
#include "hypernets/errors.hpp"
#include "hypernets/experiment.hpp"
#include "hypernets/grad_check.hpp"
#include "hypernets/gradcheck_suite.hpp"
#include "hypernets/model.hpp"
#include "hypernets/model_io.hpp"
#include "hypernets/ops.hpp"
#include "hypernets/pgm.hpp"
#include "hypernets/rng.hpp"
#include "hypernets/trainer.hpp"

namespace {

using namespace hypernets;

constexpr int kExitSuccess = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitInputError = 2;
constexpr int kExitDivergence = 3;

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// gradcheck

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Gradient of the full model loss at a generic parameter point. Freshly
// initialized models sit exactly on relu kinks (zero biases), where central
// differences are invalid, so the check runs at random nonzero parameters.
double full_model_loss_error(std::uint64_t seed, double eps) {
  ModelSpec spec;
  spec.architecture = Architecture::DeepHypernet;
  spec.image_side = 8;
  spec.control_dim = 2;
  spec.latent = 4;
  spec.enc_channels = {2, 3};
  spec.init_seed = seed;

  Rng rng(mix_seed(seed, 0x9e77));
  std::vector<Tensor> inputs;
  for (const ParamPlan& p : param_plan(spec))
    inputs.push_back(random_tensor(p.shape, rng, -0.5, 0.5));
  const std::size_t n_params = inputs.size();
  const Tensor target = random_tensor({1, 8, 8}, rng, 0.1, 0.9);
  inputs.push_back(random_tensor({1, 8, 8}, rng, 0.1, 0.9));  // image
  inputs.push_back(random_tensor({2}, rng, -1.0, 1.0));       // control

  const ScalarFn fn = [&spec, &target, n_params](Tape&, const std::vector<Tensor>& in) {
    std::vector<Tensor> params(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(n_params));
    return mse_loss(forward(spec, params, in[n_params], in[n_params + 1]), target);
  };
  return grad_check(fn, inputs, eps).max_rel_error;
}

int cmd_gradcheck(double eps, double tol, std::uint64_t seed, int n_seeds) {
  std::map<std::string, double> per_op;      // op name -> max rel error
  std::map<std::string, double> circuits;    // composite cases
  for (const std::string& op : registered_ops()) per_op[op] = 0.0;

  for (int k = 0; k < n_seeds; ++k) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(k);
    for (const GradCheckCase& c : gradcheck_cases(s)) {
      const double err = grad_check(c.fn, c.inputs, eps).max_rel_error;
      const std::string op = case_primary_op(c.name);
      if (op == "circuit") {
        double& slot = circuits[c.name];
        slot = std::max(slot, err);
      } else {
        per_op[op] = std::max(per_op[op], err);
      }
    }
    double& slot = circuits["full_model_loss"];
    slot = std::max(slot, full_model_loss_error(s, eps));
  }

  std::printf("gradient check: eps %g, tolerance %g, seeds %d (base %llu)\n", eps, tol, n_seeds,
              static_cast<unsigned long long>(seed));
  std::string worst_name;
  double worst_err = -1.0;
  bool all_pass = true;
  auto report = [&](const std::string& label, const std::string& key, double err) {
    const bool pass = err < tol;
    all_pass = all_pass && pass;
    if (err > worst_err) {
      worst_err = err;
      worst_name = key;
    }
    std::printf("%s  %-28s max rel err %.3e\n", pass ? "PASS" : "FAIL", label.c_str(), err);
  };
  for (const auto& [op, err] : per_op) report("op " + op, op, err);
  for (const auto& [name, err] : circuits) report("circuit " + name, name, err);

  if (!all_pass) {
    std::printf("gradcheck FAIL: worst offender %s (max rel err %.3e, tolerance %g)\n",
                worst_name.c_str(), worst_err, tol);
    return kExitCheckFailure;
  }
  std::printf("gradcheck PASS: every op and composite below tolerance (worst %s at %.3e)\n",
              worst_name.c_str(), worst_err);
  return kExitSuccess;
}

// ---------------------------------------------------------------------------
// shared config plumbing

ExperimentConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed,
                             const std::string& out_override) {
  ExperimentConfig cfg = load_experiment_config(path);
  if (seed) cfg.seed = *seed;
  if (!out_override.empty()) cfg.out_dir = out_override;
  finalize_experiment_config(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                 const std::string& out_override) {
  const ExperimentConfig cfg = load_config(config_path, seed, out_override);
  const DatasetPair pair = build_datasets(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path out(cfg.out_dir);
  const std::string train_path = (out / kTrainCacheName).string();
  const std::string test_path = (out / kTestCacheName).string();
  save_dataset(pair.train, train_path);
  save_dataset(pair.test, test_path);
  std::printf("train: %zu samples, hash 0x%016llx -> %s\n", pair.train.samples.size(),
              static_cast<unsigned long long>(dataset_hash(pair.train)), train_path.c_str());
  std::printf("test: %zu samples, hash 0x%016llx -> %s\n", pair.test.samples.size(),
              static_cast<unsigned long long>(dataset_hash(pair.test)), test_path.c_str());
  return kExitSuccess;
}

// ---------------------------------------------------------------------------
// run

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            const std::string& out_override, const std::string& data_dir) {
  const ExperimentConfig cfg = load_config(config_path, seed, out_override);
  const RunResult result = run_experiment(cfg, &std::cout, data_dir);
  std::printf("wrote %s\n", result.artifacts.model_path.c_str());
  std::printf("wrote %s\n", result.artifacts.loss_csv_path.c_str());
  std::printf("wrote %s\n", result.artifacts.train_grid_path.c_str());
  std::printf("wrote %s\n", result.artifacts.test_grid_path.c_str());
  std::printf("wrote %s\n", result.artifacts.summary_path.c_str());
  return kExitSuccess;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& out_dir) {
  const Model model = load_model(model_path);
  const Dataset data = load_dataset(data_path);
  const EvalResult eval = evaluate(model, data);
  std::printf("mean loss: %s\n", format_g(eval.mean).c_str());
  for (const auto& [cls, mean] : eval.per_class)
    std::printf("class %d: %s\n", cls, format_g(mean).c_str());
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::string csv_path = (std::filesystem::path(out_dir) / "eval.csv").string();
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw ContractError("cannot write " + csv_path);
    csv << "mean_loss";
    for (int cls = 0; cls < 10; ++cls) csv << ",class_" << cls;
    csv << "\n" << format_g(eval.mean);
    for (int cls = 0; cls < 10; ++cls) {
      csv << ',';
      auto it = eval.per_class.find(cls);
      if (it != eval.per_class.end()) csv << format_g(it->second);
    }
    csv << "\n";
    std::printf("wrote %s\n", csv_path.c_str());
  }
  return kExitSuccess;
}

// ---------------------------------------------------------------------------
// render

int cmd_render(const std::string& model_path, const std::string& data_path,
               const std::string& out_path, int rows, int column_pairs) {
  const Model model = load_model(model_path);
  const Dataset data = load_dataset(data_path);
  const std::size_t want =
      static_cast<std::size_t>(rows) * static_cast<std::size_t>(column_pairs);
  if (want > data.samples.size()) {
    const int max_rows = static_cast<int>(data.samples.size()) / column_pairs;
    const int clamped = max_rows < 1 ? 1 : max_rows;
    std::fprintf(stderr,
                 "warning: %d rows x %d pairs exceeds the %zu available samples; rendering %d "
                 "rows\n",
                 rows, column_pairs, data.samples.size(), clamped);
    rows = clamped;
  }
  const Canvas canvas = comparison_grid(model, data, rows, column_pairs);
  if (const auto dir = std::filesystem::path(out_path).parent_path(); !dir.empty())
    std::filesystem::create_directories(dir);
  save_pgm(canvas, out_path);
  std::printf("wrote %s (%d x %d)\n", out_path.c_str(), canvas.width, canvas.height);
  return kExitSuccess;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Training and evaluation harness for weight-modulating image networks.\n"
      "Exit codes: 0 success, 1 check failure, 2 input/config error, 3 divergence."};
  app.require_subcommand(1);
  app.footer(config_schema_text());

  // gradcheck
  auto* gc = app.add_subcommand(
      "gradcheck", "Compare every tape op and a full model loss against central differences");
  double gc_eps = 1e-5, gc_tol = 1e-4;
  std::uint64_t gc_seed = 42;
  int gc_seeds = 3;
  gc->add_option("--eps", gc_eps, "finite-difference step")->capture_default_str();
  gc->add_option("--tol", gc_tol, "max relative error accepted")->capture_default_str();
  gc->add_option("--seed", gc_seed, "base seed for random inputs")->capture_default_str();
  gc->add_option("--seeds", gc_seeds, "number of consecutive seeds to run")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  // shared flag storage
  std::string config_path, model_path, data_path, out_path;
  std::optional<std::uint64_t> seed_override;
  std::uint64_t seed_value = 0;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&seed_value, &seed_override](const std::uint64_t& v) {
          seed_value = v;
          seed_override = v;
        },
        "override the config's master seed");
  };

  // gen-data
  auto* gd = app.add_subcommand("gen-data", "Write the train/test dataset caches for a config");
  gd->add_option("--config", config_path, "experiment config JSON")->required();
  gd->add_option("--out", out_path, "output directory (default: the config's out_dir)");
  add_seed(gd);

  // run
  auto* rn = app.add_subcommand(
      "run", "Train a model per config; writes model, loss CSV, grids, and summary");
  rn->add_option("--config", config_path, "experiment config JSON")->required();
  rn->add_option("--out", out_path, "output directory (default: the config's out_dir)");
  rn->add_option("--data", data_path, "directory with train/test caches from gen-data");
  add_seed(rn);
  rn->footer(config_schema_text());

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a saved model on a dataset cache");
  ev->add_option("--model", model_path, "model file")->required();
  ev->add_option("--data", data_path, "dataset cache file")->required();
  ev->add_option("--out", out_path, "directory for eval.csv (optional)");

  // render
  auto* rd = app.add_subcommand("render", "Render a (reference, output) comparison grid as PGM");
  rd->add_option("--model", model_path, "model file")->required();
  rd->add_option("--data", data_path, "dataset cache file")->required();
  rd->add_option("--out", out_path, "output PGM path")->capture_default_str();
  int rd_rows = 8, rd_cols = 4;
  rd->add_option("--rows", rd_rows, "grid rows")->capture_default_str()->check(CLI::PositiveNumber);
  rd->add_option("--cols", rd_cols, "column pairs per row")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitSuccess : kExitInputError;
  }

  try {
    if (gc->parsed()) return cmd_gradcheck(gc_eps, gc_tol, gc_seed, gc_seeds);
    if (gd->parsed()) return cmd_gen_data(config_path, seed_override, out_path);
    if (rn->parsed()) return cmd_run(config_path, seed_override, out_path, data_path);
    if (ev->parsed()) return cmd_eval(model_path, data_path, out_path);
    if (rd->parsed())
      return cmd_render(model_path, data_path, out_path.empty() ? "grid.pgm" : out_path, rd_rows,
                        rd_cols);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: training diverged: %s\n", e.what());
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInputError;
  }
  return kExitInputError;
}
