#include "nicbf/training.hpp"

#include <cmath>
#include <numeric>

#include "nicbf/random.hpp"

namespace nicbf {

AdamLoopResult run_adam_loop(nn::Mlp& model, std::size_t n_train, const AdamLoopConfig& cfg,
                             const BatchObjective& batch_objective,
                             const ValidationObjective& validation, const std::string& what) {
  if (cfg.batch_size <= 0) throw ConfigError(what + ": batch_size must be positive");
  AdamLoopResult result;
  Vec params = model.parameters();
  Vec best = params;
  result.best_validation_loss = validation();
  if (!std::isfinite(result.best_validation_loss)) {
    throw TrainingAbortedError(what + ": non-finite validation loss at initialization");
  }
  result.checkpoint_history.push_back(result.best_validation_loss);

  nn::AdamState adam(params.size(), nn::AdamConfig{.learning_rate = cfg.learning_rate});
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  Vec grad(params.size());

  for (int epoch = 0; epoch < cfg.epochs && n_train > 0; ++epoch) {
    rng.shuffle(order);
    int batch_index = 0;
    for (std::size_t start = 0; start < n_train; start += batch, ++batch_index) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(start + batch, n_train)));
      grad.setZero();
      const double loss = batch_objective(idx, grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw TrainingAbortedError(what + ": non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_index));
      }
      nn::adam_step(params, grad, adam);
      model.set_parameters(params);
    }
    const double val = validation();
    if (!std::isfinite(val)) {
      throw TrainingAbortedError(what + ": non-finite validation loss at epoch " +
                                 std::to_string(epoch));
    }
    result.validation_history.push_back(val);
    if (val < result.best_validation_loss) {
      result.best_validation_loss = val;
      result.best_epoch = epoch;
      best = params;
      result.checkpoint_history.push_back(val);
    }
  }
  model.set_parameters(best);
  return result;
}

}  // namespace nicbf
