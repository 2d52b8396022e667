#include "hypernets/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>

#include "hypernets/errors.hpp"
#include "hypernets/ops.hpp"
#include "hypernets/rng.hpp"
#include "hypernets/tape.hpp"

namespace hypernets {

namespace {

// The control width the dataset's task implies for the model.
int control_dim_for_task(Task task) {
  switch (task) {
    case Task::Rotation: return 2;
    case Task::Affine: return 6;
    case Task::Compensation: return 0;
  }
  throw ContractError("unknown task enum value");
}

void check_compatible(const Model& model, const Dataset& data, const char* which) {
  const int want = control_dim_for_task(data.task);
  if (model.spec.control_dim != want) {
    throw ContractError(std::string(which) + " dataset task " + task_name(data.task) +
                        " implies control width " + std::to_string(want) + ", but the model has " +
                        std::to_string(model.spec.control_dim));
  }
  if (model.spec.image_side != data.side) {
    throw ContractError(std::string(which) + " dataset side " + std::to_string(data.side) +
                        " does not match the model side " + std::to_string(model.spec.image_side));
  }
}

std::optional<Tensor> control_tensor(const Sample& s, Task task) {
  const std::vector<double> c = sample_control(s, task);
  if (c.empty()) return std::nullopt;
  return Tensor(Shape{static_cast<int>(c.size())}, c);
}

double sample_loss(const ModelSpec& spec, const std::vector<Tensor>& params, const Sample& s,
                   Task task) {
  const Tensor pred = forward(spec, params, model_input(s, task).as_tensor(),
                              control_tensor(s, task));
  return mse_loss(pred, model_target(s, task).as_tensor()).item();
}

}  // namespace

void validate_optim_config(const OptimConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    throw ContractError("learning_rate must be finite and >= 0");
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0)) throw ContractError("beta1 must be in (0, 1)");
  if (!(cfg.beta2 > 0.0 && cfg.beta2 < 1.0)) throw ContractError("beta2 must be in (0, 1)");
  if (!(cfg.epsilon > 0.0)) throw ContractError("epsilon must be > 0");
  if (cfg.batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (cfg.epochs < 0) throw ContractError("epochs must be >= 0");
}

OptimState init_optim_state(const std::vector<Tensor>& params) {
  OptimState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const Tensor& p : params) {
    st.m.emplace_back(p.values().size(), 0.0);
    st.v.emplace_back(p.values().size(), 0.0);
  }
  return st;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, OptimState& state,
               const OptimConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw ContractError("optimizer state does not match the parameter list");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::vector<double>& p = params[i].values();
    const std::vector<double>& g = grads[i].values();
    if (params[i].shape() != grads[i].shape()) {
      throw ContractError("gradient " + std::to_string(i) + " has shape " +
                          shape_str(grads[i].shape()) + ", parameter has " +
                          shape_str(params[i].shape()));
    }
    if (p.size() != state.m[i].size()) {
      throw ContractError("moment buffer " + std::to_string(i) + " does not match its parameter");
    }
    std::vector<double> next(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
      state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g[j];
      state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = state.m[i][j] / bc1;
      const double vhat = state.v[i][j] / bc2;
      next[j] = p[j] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
    params[i] = Tensor(params[i].shape(), std::move(next));
  }
}

EvalResult evaluate(const Model& model, const Dataset& data) {
  if (data.samples.empty()) throw ContractError("cannot evaluate on an empty dataset");
  check_compatible(model, data, "eval");
  std::vector<Tensor> params;
  params.reserve(model.params.size());
  for (const NamedParam& p : model.params) params.push_back(p.value);

  EvalResult result;
  std::map<int, std::pair<double, int>> acc;  // label -> (sum, count)
  double total = 0.0;
  for (const Sample& s : data.samples) {
    const double loss = sample_loss(model.spec, params, s, data.task);
    total += loss;
    auto& slot = acc[s.class_label];
    slot.first += loss;
    slot.second += 1;
  }
  result.mean = total / static_cast<double>(data.samples.size());
  for (const auto& [label, sum_count] : acc) {
    result.per_class[label] = sum_count.first / sum_count.second;
  }
  return result;
}

LossHistory train(Model& model, const Dataset& train_set, const Dataset& test_set,
                  const OptimConfig& cfg, const EpochCallback& on_epoch) {
  validate_optim_config(cfg);
  check_compatible(model, train_set, "train");
  check_compatible(model, test_set, "test");
  if (train_set.samples.empty()) throw ContractError("cannot train on an empty dataset");
  if (test_set.samples.empty()) throw ContractError("cannot train against an empty test set");

  std::vector<Tensor> params;
  params.reserve(model.params.size());
  for (const NamedParam& p : model.params) params.push_back(p.value);
  OptimState state = init_optim_state(params);

  const Task task = train_set.task;
  const std::size_t n = train_set.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  LossHistory history;
  history.train_loss.reserve(static_cast<std::size_t>(cfg.epochs));
  history.test_loss.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    double epoch_loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      Tape tape;
      std::vector<Tensor> leaves;
      leaves.reserve(params.size());
      for (const Tensor& p : params) leaves.push_back(tape.leaf(p));

      Tensor batch_sum;
      for (std::size_t i = start; i < stop; ++i) {
        const Sample& s = train_set.samples[order[i]];
        const Tensor pred =
            forward(model.spec, leaves, model_input(s, task).as_tensor(), control_tensor(s, task));
        const Tensor loss = mse_loss(pred, model_target(s, task).as_tensor());
        batch_sum = i == start ? loss : add(batch_sum, loss);
      }
      const Tensor batch_loss = scale(batch_sum, 1.0 / static_cast<double>(stop - start));
      const double loss_value = batch_loss.item();
      if (!std::isfinite(loss_value)) {
        throw DivergenceError("training loss became non-finite in epoch " +
                              std::to_string(epoch));
      }
      epoch_loss_sum += loss_value * static_cast<double>(stop - start);

      tape.backward(batch_loss);
      std::vector<Tensor> grads;
      grads.reserve(leaves.size());
      for (const Tensor& leaf : leaves) grads.push_back(tape.grad(leaf));
      adam_step(params, grads, state, cfg);
    }
    history.train_loss.push_back(epoch_loss_sum / static_cast<double>(n));

    for (std::size_t i = 0; i < params.size(); ++i) model.params[i].value = params[i];
    const EvalResult eval = evaluate(model, test_set);
    if (!std::isfinite(eval.mean)) {
      throw DivergenceError("test loss became non-finite in epoch " + std::to_string(epoch));
    }
    history.test_loss.push_back(eval.mean);
    for (const auto& [label, mean] : eval.per_class) {
      history.per_class_test[label].push_back(mean);
    }
    if (on_epoch) on_epoch(epoch, history.train_loss.back(), eval.mean);
  }
  for (std::size_t i = 0; i < params.size(); ++i) model.params[i].value = params[i];
  return history;
}

std::string loss_history_csv(const LossHistory& history) {
  std::string out = "epoch,train_loss,test_loss";
  for (int c = 0; c < 10; ++c) out += ",class_" + std::to_string(c);
  out += "\n";
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
    out += std::to_string(e) + "," + fmt(history.train_loss[e]) + "," + fmt(history.test_loss[e]);
    for (int c = 0; c < 10; ++c) {
      out += ",";
      const auto it = history.per_class_test.find(c);
      if (it != history.per_class_test.end() && e < it->second.size()) {
        out += fmt(it->second[e]);
      }
    }
    out += "\n";
  }
  return out;
}

void save_loss_csv(const std::string& path, const LossHistory& history) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f << loss_history_csv(history);
  if (!f) throw FormatError("short write to " + path);
}

}  // namespace hypernets
