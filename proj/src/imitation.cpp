#include "nicbf/imitation.hpp"

#include <cmath>
#include <numeric>

#include "nicbf/random.hpp"
#include "nicbf/training.hpp"

namespace nicbf::imitation {

double loss_imitation(const nn::Mlp& policy, const Mat& states, const Mat& targets, Vec* grad) {
  require_dim(states.rows(), policy.input_dim(), "loss_imitation states");
  require_dim(targets.rows(), policy.output_dim(), "loss_imitation targets");
  require_dim(targets.cols(), states.cols(), "loss_imitation batch");
  const auto b = static_cast<double>(states.cols());
  if (states.cols() == 0) {
    if (grad) *grad = Vec::Zero(policy.num_parameters());
    return 0.0;
  }
  nn::ForwardTrace trace;
  const Mat err = nn::forward(policy, states, trace) - targets;
  if (grad) *grad = nn::backward(policy, trace, (2.0 / b) * err).params;
  return err.squaredNorm() / b;
}

TrainResult train_policy(const expert::ExpertDataset& data, const TrainConfig& cfg) {
  const auto N = static_cast<std::size_t>(data.size());
  if (N == 0) throw Error("train_policy: empty expert dataset");
  const auto n = static_cast<int>(data.states.rows());
  const auto m = static_cast<int>(data.inputs.rows());

  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(cfg.seed, 1));
  split_rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(N)));
  auto gather = [&](std::size_t from, std::size_t to, Mat& xs, Mat& us) {
    xs.resize(n, static_cast<Eigen::Index>(to - from));
    us.resize(m, static_cast<Eigen::Index>(to - from));
    for (std::size_t i = from; i < to; ++i) {
      xs.col(static_cast<Eigen::Index>(i - from)) = data.states.col(static_cast<Eigen::Index>(order[i]));
      us.col(static_cast<Eigen::Index>(i - from)) = data.inputs.col(static_cast<Eigen::Index>(order[i]));
    }
  };
  Mat val_x, val_u, train_x, train_u;
  gather(0, n_val, val_x, val_u);
  gather(n_val, N, train_x, train_u);
  if (n_val == 0) {
    val_x = train_x;
    val_u = train_u;
  }

  std::vector<int> dims{n};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(m);
  TrainResult result;
  result.policy = nn::Mlp::glorot(dims, cfg.activation, derive_seed(cfg.seed, 0));
  result.initial_validation_loss = loss_imitation(result.policy, val_x, val_u);

  Mat bx, bu;
  auto objective = [&](const std::vector<std::size_t>& idx, Vec& grad) {
    bx.resize(n, static_cast<Eigen::Index>(idx.size()));
    bu.resize(m, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) {
      bx.col(static_cast<Eigen::Index>(c)) = train_x.col(static_cast<Eigen::Index>(idx[c]));
      bu.col(static_cast<Eigen::Index>(c)) = train_u.col(static_cast<Eigen::Index>(idx[c]));
    }
    return loss_imitation(result.policy, bx, bu, &grad);
  };
  auto validation = [&] { return loss_imitation(result.policy, val_x, val_u); };

  const AdamLoopResult loop = run_adam_loop(
      result.policy, static_cast<std::size_t>(train_x.cols()),
      AdamLoopConfig{cfg.epochs, cfg.batch_size, cfg.learning_rate, derive_seed(cfg.seed, 2)},
      objective, validation, "train_policy");
  result.best_validation_loss = loop.best_validation_loss;
  result.best_epoch = loop.best_epoch;
  result.validation_history = loop.validation_history;
  result.validation_rms = std::sqrt(result.best_validation_loss);
  return result;
}

}  // namespace nicbf::imitation
