#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nicbf/common.hpp"
#include "nicbf/dynamics.hpp"

/// Unconstrained NMPC over the true dynamics, solved by direct single
/// shooting with Adam on adjoint gradients.
namespace nicbf::expert {

struct NmpcConfig {
  int horizon_steps = 20;
  double dt = 0.1;
  Mat Q;  // n x n, positive semidefinite
  Mat R;  // m x m, positive definite
  int max_iters = 500;
  double grad_tol = 1e-6;
  double learning_rate = 0.05;
  /// Learning rate is multiplied by this whenever an iterate's cost rises.
  double lr_decay = 0.7;
  double min_learning_rate = 1e-10;
  std::uint64_t seed = 0;

  /// Shape checks plus Q >= 0 and R > 0 via symmetric eigenvalues.
  void validate(int n, int m) const;
};

/// Q = I, R = 0.1 I, remaining fields at their defaults.
NmpcConfig default_nmpc(int n, int m);

/// Extra per-step cost on (x_{k+1}, u_k); adds its gradients into gx and gu.
using StagePenalty = std::function<double(const Vec& x_next, const Vec& u, Vec& gx, Vec& gu)>;

/// sum_{k=0}^{N-1} x_k' Q x_k + u_k' R u_k (+ penalty) along the RK4 rollout from x0.
/// When `grad` is given it receives d cost / d u_k for every k (reverse sweep).
double shooting_cost(const dynamics::SystemSpec& spec, const Vec& x0, const std::vector<Vec>& inputs,
                     const NmpcConfig& cfg, const StagePenalty* penalty, std::vector<Vec>* grad);

struct NmpcSolution {
  std::vector<Vec> inputs;
  double cost = 0.0;
  int iterations = 0;
  int restarts = 0;  // learning-rate halvings after a non-finite cost
  bool converged = false;
};

/// Best iterate of the Adam shooting solver. `warm_start` seeds the inputs
/// (zeros otherwise). Throws SolverDivergedError after 5 non-finite restarts.
NmpcSolution solve_nmpc(const dynamics::SystemSpec& spec, const Vec& x0, const NmpcConfig& cfg,
                        const std::vector<Vec>* warm_start = nullptr,
                        const StagePenalty* penalty = nullptr);

/// Previous solution advanced one step with a zero input appended.
std::vector<Vec> shift_warm_start(const std::vector<Vec>& inputs);

struct ExpertConfig {
  int n_starts = 200;
  int receding_steps = 40;
  Vec state_low;  // start box, [0,1]^n by default
  Vec state_high;
  std::uint64_t seed = 0;
};

/// Visited (x_k, u_k*) pairs of the receding-horizon expert, one column each.
struct ExpertDataset {
  Mat states;
  Mat inputs;
  int n_starts = 0;
  int skipped_starts = 0;

  Eigen::Index size() const { return states.cols(); }
};

ExpertDataset gen_expert_dataset(const dynamics::SystemSpec& spec, const ExpertConfig& cfg,
                                 const NmpcConfig& nmpc);

/// CSV with header `x1..xn,u1..um`, one visited pair per row.
void save_dataset(const ExpertDataset& data, const std::string& csv_path);
ExpertDataset load_dataset(const std::string& csv_path, int n);

}  // namespace nicbf::expert
