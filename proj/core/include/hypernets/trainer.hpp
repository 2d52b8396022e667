#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hypernets/dataset.hpp"
#include "hypernets/model.hpp"
#include "hypernets/tensor.hpp"

namespace hypernets {

struct OptimConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t shuffle_seed = 1;
};

// Throws ContractError if a field is out of range. learning_rate 0 is legal:
// it turns training into a no-op whose bit-identity is a useful diagnostic.
void validate_optim_config(const OptimConfig& cfg);

// Adam moment buffers; one pair of vectors per parameter tensor.
struct OptimState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
};

OptimState init_optim_state(const std::vector<Tensor>& params);

// One bias-corrected Adam update. `params` entries are replaced with updated
// tensors. Shape mismatches between params, grads, and state are contract
// errors.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, OptimState& state,
               const OptimConfig& cfg);

struct EvalResult {
  double mean = 0.0;
  std::map<int, double> per_class;  // class label -> mean loss over that class
};

// Mean reconstruction loss over the dataset, plus per-class means. Never
// mutates the model; an empty dataset is a contract error.
EvalResult evaluate(const Model& model, const Dataset& data);

struct LossHistory {
  std::vector<double> train_loss;                    // one entry per epoch
  std::vector<double> test_loss;                     // one entry per epoch
  std::map<int, std::vector<double>> per_class_test; // classes present in the test set
};

// Invoked after each epoch with (epoch index, mean train loss, test loss);
// purely observational.
using EpochCallback = std::function<void(int, double, double)>;

// Minibatch training of every parameter (control branch and core together)
// against the squared-error objective. Each epoch reshuffles with a seed
// derived from cfg.shuffle_seed and the epoch index, so runs are fully
// deterministic. Gradients are averaged over the batch. A non-finite loss
// aborts with DivergenceError. The dataset's task must match the model
// (control width and side), checked before any step.
LossHistory train(Model& model, const Dataset& train_set, const Dataset& test_set,
                  const OptimConfig& cfg, const EpochCallback& on_epoch = {});

// CSV rendering: header `epoch,train_loss,test_loss,class_0,...,class_9`,
// one row per epoch, values with 9 significant digits; classes absent from
// the test set leave their cell empty.
std::string loss_history_csv(const LossHistory& history);
void save_loss_csv(const std::string& path, const LossHistory& history);

}  // namespace hypernets
