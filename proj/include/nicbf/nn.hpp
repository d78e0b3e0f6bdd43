#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nicbf/common.hpp"

/// Small fixed-topology MLP engine: evaluation, reverse-mode parameter and
/// input gradients, forward-mode directional derivatives (and their
/// parameter gradients), and Adam.
///
/// Batched routines take one sample per column.
namespace nicbf::nn {

enum class Activation { identity, relu, tanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

class Mlp {
 public:
  Mlp() = default;

  /// All weights and biases zero.
  Mlp(std::vector<int> layer_dims, Activation hidden);

  /// Uniform Glorot weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Mlp glorot(std::vector<int> layer_dims, Activation hidden, std::uint64_t seed);

  int input_dim() const { return layer_dims_.front(); }
  int output_dim() const { return layer_dims_.back(); }
  std::size_t num_layers() const { return weights_.size(); }
  Eigen::Index num_parameters() const;

  const std::vector<int>& layer_dims() const { return layer_dims_; }
  Activation hidden_activation() const { return hidden_; }

  Mat& weight(std::size_t layer) { return weights_.at(layer); }
  const Mat& weight(std::size_t layer) const { return weights_.at(layer); }
  Vec& bias(std::size_t layer) { return biases_.at(layer); }
  const Vec& bias(std::size_t layer) const { return biases_.at(layer); }

  /// Flattened parameters: per layer, the weight matrix row-major, then the bias.
  Vec parameters() const;
  void set_parameters(const Vec& flat);

  Vec operator()(const Vec& x) const;
  Mat forward(const Mat& batch) const;

 private:
  std::vector<int> layer_dims_;
  std::vector<Mat> weights_;
  std::vector<Vec> biases_;
  Activation hidden_ = Activation::tanh;
};

/// Values kept by a forward pass for the reverse sweep. inputs[l] is what
/// layer l consumes; preacts[l] = W_l inputs[l] + b_l.
struct ForwardTrace {
  std::vector<Mat> inputs;
  std::vector<Mat> preacts;
};

Mat forward(const Mlp& net, const Mat& batch, ForwardTrace& trace);

struct Gradients {
  Vec params;  // summed over the batch
  Mat input;   // one column per sample
};

/// Gradient of sum_b upstream_b . y_b with respect to parameters and inputs.
Gradients backward(const Mlp& net, const ForwardTrace& trace, const Mat& upstream);
Gradients backward(const Mlp& net, const Vec& x, const Vec& upstream);

/// d output / d input, out x in.
Mat jacobian_input(const Mlp& net, const Vec& x);

struct TangentTrace {
  ForwardTrace primal;
  std::vector<Mat> tangents;         // tangent of inputs[l]
  std::vector<Mat> tangent_preacts;  // W_l tangents[l]
};

/// Forward-mode pass: returns (y, J(x) t) for every column.
std::pair<Mat, Mat> forward_tangent(const Mlp& net, const Mat& batch, const Mat& directions,
                                    TangentTrace& trace);

/// Tangent half of forward_tangent for a trace whose primal pass is already filled.
Mat propagate_tangent(const Mlp& net, const Mat& directions, TangentTrace& trace);

/// Parameter gradient of sum_b (value_upstream_b . y_b + tangent_upstream_b . (J t)_b),
/// with the directions held fixed.
Vec tangent_backward(const Mlp& net, const TangentTrace& trace, const Mat& value_upstream,
                     const Mat& tangent_upstream);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(Eigen::Index n, AdamConfig cfg)
      : first_moment(Vec::Zero(n)), second_moment(Vec::Zero(n)), config(cfg) {}

  Vec first_moment;
  Vec second_moment;
  long step = 0;
  AdamConfig config;
};

/// One bias-corrected Adam update in place.
void adam_step(Vec& params, const Vec& grads, AdamState& state);

// Model files: versioned JSON record, bit-exact round trip.
inline constexpr int kModelFormatVersion = 1;

std::string serialize(const Mlp& net);
Mlp deserialize(std::string_view text);
void save(const Mlp& net, const std::string& path);
Mlp load(const std::string& path);

}  // namespace nicbf::nn
