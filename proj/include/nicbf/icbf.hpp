#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "nicbf/common.hpp"
#include "nicbf/dynamics.hpp"
#include "nicbf/nn.hpp"

/// Joint state-input safe set, its labeled samples, the ICBF quantities p and
/// q, and training of a neural integral barrier h_theta(x, u).
namespace nicbf::icbf {

struct Obstacle {
  Vec center;  // in position coordinates
  double radius = 0.0;
};

struct EnvironmentSpec {
  Vec domain_low;  // per state coordinate
  Vec domain_high;
  std::vector<Obstacle> obstacles;
  double input_ball_radius = 0.5;  // admissible inputs: ||u|| <= b
  Vec goal;
  std::vector<int> position_indices{0, 1};

  int state_dim() const { return static_cast<int>(domain_low.size()); }
  void validate() const;

  Vec position(const Vec& x) const;
  /// min_i ||pos - c_i|| - r_i; +inf without obstacles.
  double clearance(const Vec& x) const;
  /// Strictly outside every obstacle.
  bool state_safe(const Vec& x) const;
  bool input_admissible(const Vec& u) const;
  bool safe(const Vec& x, const Vec& u) const { return state_safe(x) && input_admissible(u); }
};

/// gamma(s) = gain * s.
struct GammaSpec {
  double gain = 1.0;
  double operator()(double s) const { return gain * s; }
};

/// Column-stacked samples of the joint space with their safe/unsafe labels.
struct LabeledSet {
  Mat states;
  Mat inputs;
  std::vector<char> safe;

  Eigen::Index size() const { return states.cols(); }
  std::size_t num_safe() const;
  Mat joint() const;  // [x; u] per column
};

/// Seeded uniform samples: x over the domain box, u over [-1.5 b, 1.5 b]^m
/// ([-1, 1]^m when b is infinite). Classes are rebalanced to 50/50 by
/// rejection when the safe fraction falls outside [0.2, 0.8].
/// Throws NoSafeSamplesError when nothing safe was drawn.
LabeledSet sample_labeled(const EnvironmentSpec& env, int m, int n_samples, std::uint64_t seed);

/// Value and gradients of a barrier h(x, u).
struct BarrierEval {
  double value = 0.0;
  Vec grad_x;
  Vec grad_u;
};

class Barrier {
 public:
  virtual ~Barrier() = default;
  virtual BarrierEval evaluate(const Vec& x, const Vec& u) const = 0;
};

class NeuralBarrier final : public Barrier {
 public:
  NeuralBarrier(const nn::Mlp& net, int n);
  BarrierEval evaluate(const Vec& x, const Vec& u) const override;
  const nn::Mlp& net() const { return net_; }

 private:
  nn::Mlp net_;
  int n_;
};

/// Smooth minimum (log-sum-exp with temperature rho) of every obstacle
/// clearance ||pos - c_i|| - r_i and of b^2 - ||u||^2.
class AnalyticBarrier final : public Barrier {
 public:
  explicit AnalyticBarrier(EnvironmentSpec env, double rho = 0.01);
  BarrierEval evaluate(const Vec& x, const Vec& u) const override;

 private:
  EnvironmentSpec env_;
  double rho_;
};

/// Integral control law u_dot = phi(x, u).
using IntegralLaw = std::function<Vec(const Vec& x, const Vec& u)>;
using Policy = std::function<Vec(const Vec& x)>;

/// phi(x, u) = gain * (policy(x) - u).
IntegralLaw tracking_law(Policy policy, double gain);
Policy policy_of(const nn::Mlp& net);

/// p(x, u) = (dh/du)^T.
Vec icbf_p(const Barrier& h, const Vec& x, const Vec& u);
/// q(x, u) = -(dh/dx F(x, u) + dh/du phi(x, u) + gamma(h)).
double icbf_q(const Barrier& h, const dynamics::VectorField& field, const IntegralLaw& phi,
              const GammaSpec& gamma, const Vec& x, const Vec& u);

struct IcbfLossConfig {
  double epsilon = 0.0;
  GammaSpec gamma;
  double tracking_gain = 10.0;  // kappa_track of phi, 1 / dt by default
  /// Use (-p'v* + q + eps)_+ in the first hinge instead of (-p'v* + q - eps)_+.
  bool flip_epsilon_sign = false;
  double p_tol = 1e-9;
};

struct IcbfLossTerms {
  double derivative_hinge = 0.0;  // sum over safe pairs of (-p'v* + q -+ eps)_+
  double safe_hinge = 0.0;        // sum over safe pairs of (-h)_+
  double unsafe_hinge = 0.0;      // sum over unsafe pairs of (h)_+
  double total() const { return derivative_hinge + safe_hinge + unsafe_hinge; }
};

/// Three-hinge ICBF loss on the given samples. v* is recomputed from the
/// current h and held constant for the gradient (written to `grad` if given).
IcbfLossTerms loss_icbf(const nn::Mlp& h, const nn::Mlp& dynamics_model, const nn::Mlp& policy,
                        const LabeledSet& samples, const IcbfLossConfig& cfg, Vec* grad = nullptr);

/// Fraction of samples with (h > 0) == safe.
double sign_accuracy(const nn::Mlp& h, const LabeledSet& samples);

struct TrainConfig {
  std::vector<int> hidden{128, 128, 128, 128};
  nn::Activation activation = nn::Activation::relu;
  int epochs = 150;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  IcbfLossConfig loss;
};

struct TrainResult {
  nn::Mlp barrier;
  double best_validation_loss = 0.0;
  int best_epoch = -1;
  double train_loss = 0.0;
  double validation_accuracy = 0.0;  // sign accuracy on the held-out samples
  std::vector<double> validation_history;
};

TrainResult train_icbf(const LabeledSet& samples, const nn::Mlp& dynamics_model,
                       const nn::Mlp& policy, const TrainConfig& cfg);

/// (train, validation) split of a labeled set.
std::pair<LabeledSet, LabeledSet> split(const LabeledSet& samples, double validation_fraction,
                                        std::uint64_t seed);
LabeledSet subset(const LabeledSet& samples, const std::vector<std::size_t>& idx);

/// CSV `x1..xn,u1..um,label` with label 1 = safe.
void save_samples(const LabeledSet& samples, const std::string& path);
LabeledSet load_samples(const std::string& path, int n);

}  // namespace nicbf::icbf
