#pragma once

#include <cstdint>
#include <vector>

#include "nicbf/common.hpp"
#include "nicbf/expert.hpp"
#include "nicbf/nn.hpp"

/// Behavior cloning of the NMPC expert into a state-feedback policy.
namespace nicbf::imitation {

/// Mean over columns of ||policy(x) - u*||^2; writes the parameter gradient when asked.
double loss_imitation(const nn::Mlp& policy, const Mat& states, const Mat& targets, Vec* grad = nullptr);

struct TrainConfig {
  std::vector<int> hidden{128, 128};
  nn::Activation activation = nn::Activation::relu;
  int epochs = 300;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TrainResult {
  nn::Mlp policy;
  double initial_validation_loss = 0.0;
  double best_validation_loss = 0.0;
  int best_epoch = -1;
  /// Root-mean-square per-sample error ||policy(x) - u*|| on the held-out pairs.
  double validation_rms = 0.0;
  std::vector<double> validation_history;
};

TrainResult train_policy(const expert::ExpertDataset& data, const TrainConfig& cfg);

}  // namespace nicbf::imitation
