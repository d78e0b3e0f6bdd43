#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nicbf/nn.hpp"

namespace nicbf {

struct AdamLoopConfig {
  int epochs = 10;
  int batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct AdamLoopResult {
  double best_validation_loss = 0.0;
  int best_epoch = -1;
  std::vector<double> validation_history;
  std::vector<double> checkpoint_history;
};

/// Minibatch loss over the given training indices; fills the parameter gradient.
using BatchObjective = std::function<double(const std::vector<std::size_t>& indices, Vec& grad)>;
using ValidationObjective = std::function<double()>;

/// Shuffled-minibatch Adam with best-validation checkpointing. The model ends
/// holding the best parameters seen (the initialization counts as epoch -1).
/// Throws TrainingAbortedError naming `what`, the epoch and the batch on a
/// non-finite loss or gradient.
AdamLoopResult run_adam_loop(nn::Mlp& model, std::size_t n_train, const AdamLoopConfig& cfg,
                             const BatchObjective& batch_objective,
                             const ValidationObjective& validation, const std::string& what);

}  // namespace nicbf
