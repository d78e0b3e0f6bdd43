#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nicbf/common.hpp"
#include "nicbf/dynamics.hpp"
#include "nicbf/nn.hpp"

/// Learning a vector field F_theta(x, u) from sampled trajectories, with the
/// one-step RK4 prediction loss and multi-step forecasting.
namespace nicbf::sysid {

using dynamics::Trajectory;

struct DynDataset {
  std::vector<Trajectory> trajectories;
  double dt = 0.0;
  int resampled = 0;  // trajectories discarded for integrator overflow and redrawn

  std::size_t num_transitions() const;
  /// Every trajectory shares dt and holds finite values.
  void validate() const;
};

struct GenerationConfig {
  int n_traj = 200;
  double horizon = 10.0;  // s
  double dt = 0.1;        // s
  Vec input_low;          // per input coordinate
  Vec input_high;
  Vec state_low;          // initial-state box
  Vec state_high;
  std::uint64_t seed = 0;
  int max_resamples = 1000;
};

/// Unit boxes [0,1]^n and [0,1]^m.
GenerationConfig default_generation(int n, int m);

DynDataset gen_dynamics_data(const dynamics::SystemSpec& spec, const GenerationConfig& cfg);

/// Column-stacked (x_{i-1}, u_{i-1}) -> x_i pairs.
struct Transitions {
  Mat states;
  Mat inputs;
  Mat next;
};
Transitions transitions(const DynDataset& data);
Transitions transitions(const std::vector<Trajectory>& trajs);

/// F_theta as a vector field on (x, u).
dynamics::VectorField net_field(const nn::Mlp& model);
dynamics::SystemSpec as_system(const nn::Mlp& model, int n, int m, std::string name = "learned");

/// One RK4 step of the net's field over dt, one column per sample.
Mat predict_step(const nn::Mlp& model, const Mat& states, const Mat& inputs, double dt);
Vec predict_step(const nn::Mlp& model, const Vec& x, const Vec& u, double dt);

/// Sum of squared one-step prediction errors over every transition.
double loss_dynamics(const nn::Mlp& model, const DynDataset& data);
/// Same loss over a transition set; writes d loss / d params when `grad` is given.
double loss_dynamics(const nn::Mlp& model, const Transitions& batch, double dt, Vec* grad);

/// States x_0..x_r obtained by iterating the one-step map.
std::vector<Vec> predict_rollout(const nn::Mlp& model, const Vec& x0, const std::vector<Vec>& inputs,
                                 double dt);

struct TrainConfig {
  std::vector<int> hidden{128, 128, 128, 128};
  nn::Activation activation = nn::Activation::tanh;
  int epochs = 60;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TrainResult {
  nn::Mlp model;
  double best_validation_loss = 0.0;
  int best_epoch = -1;  // -1: the initialization was never beaten
  std::vector<double> validation_history;
  /// Validation loss at each new best checkpoint; non-increasing.
  std::vector<double> checkpoint_history;
};

TrainResult train_dynamics(const DynDataset& data, const TrainConfig& cfg);

/// Split by whole trajectories: (train, validation).
std::pair<std::vector<Trajectory>, std::vector<Trajectory>> split_trajectories(
    const DynDataset& data, double validation_fraction, std::uint64_t seed);

/// One CSV per trajectory plus manifest.json (dt, seed, generation parameters).
void save_dataset(const DynDataset& data, const GenerationConfig& cfg, const std::string& dir);
DynDataset load_dataset(const std::string& dir);

}  // namespace nicbf::sysid
