#include "nicbf/nn.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace nicbf::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat activate(Activation a, const Mat& z) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
  }
  return z;
}

// Subgradient of relu at 0 is 0.
Mat derivative(Activation a, const Mat& z) {
  switch (a) {
    case Activation::identity: return Mat::Ones(z.rows(), z.cols());
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: {
      const auto t = z.array().tanh();
      return (1.0 - t * t).matrix();
    }
  }
  return z;
}

Mat second_derivative(Activation a, const Mat& z) {
  if (a == Activation::tanh) {
    const auto t = z.array().tanh();
    return (-2.0 * t * (1.0 - t * t)).matrix();
  }
  return Mat::Zero(z.rows(), z.cols());
}

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) throw ShapeError("Mlp: need at least input and output dims");
  for (int d : dims) {
    if (d <= 0) throw ShapeError("Mlp: layer dims must be positive");
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_string(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

Mlp::Mlp(std::vector<int> layer_dims, Activation hidden)
    : layer_dims_(std::move(layer_dims)), hidden_(hidden) {
  check_dims(layer_dims_);
  for (std::size_t l = 0; l + 1 < layer_dims_.size(); ++l) {
    weights_.push_back(Mat::Zero(layer_dims_[l + 1], layer_dims_[l]));
    biases_.push_back(Vec::Zero(layer_dims_[l + 1]));
  }
}

Mlp Mlp::glorot(std::vector<int> layer_dims, Activation hidden, std::uint64_t seed) {
  Mlp net(std::move(layer_dims), hidden);
  std::mt19937_64 rng(seed);
  for (auto& w : net.weights_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    }
  }
  return net;
}

Eigen::Index Mlp::num_parameters() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

Vec Mlp::parameters() const {
  Vec flat(num_parameters());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto& w = weights_[l];
    Eigen::Map<RowMat>(flat.data() + off, w.rows(), w.cols()) = w;
    off += w.size();
    flat.segment(off, biases_[l].size()) = biases_[l];
    off += biases_[l].size();
  }
  return flat;
}

void Mlp::set_parameters(const Vec& flat) {
  require_dim(flat.size(), num_parameters(), "Mlp::set_parameters");
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto& w = weights_[l];
    w = Eigen::Map<const RowMat>(flat.data() + off, w.rows(), w.cols());
    off += w.size();
    biases_[l] = flat.segment(off, biases_[l].size());
    off += biases_[l].size();
  }
}

Vec Mlp::operator()(const Vec& x) const {
  require_dim(x.size(), input_dim(), "mlp_forward input");
  return forward(Mat(x)).col(0);
}

Mat Mlp::forward(const Mat& batch) const {
  require_dim(batch.rows(), input_dim(), "mlp_forward input");
  Mat a = batch;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Mat z = weights_[l] * a;
    z.colwise() += biases_[l];
    a = (l + 1 < weights_.size()) ? activate(hidden_, z) : std::move(z);
  }
  return a;
}

Mat forward(const Mlp& net, const Mat& batch, ForwardTrace& trace) {
  require_dim(batch.rows(), net.input_dim(), "mlp_forward input");
  const std::size_t L = net.num_layers();
  trace.inputs.resize(L);
  trace.preacts.resize(L);
  trace.inputs[0] = batch;
  for (std::size_t l = 0; l < L; ++l) {
    Mat z = net.weight(l) * trace.inputs[l];
    z.colwise() += net.bias(l);
    trace.preacts[l] = std::move(z);
    if (l + 1 < L) trace.inputs[l + 1] = activate(net.hidden_activation(), trace.preacts[l]);
  }
  return trace.preacts[L - 1];
}

Gradients backward(const Mlp& net, const ForwardTrace& trace, const Mat& upstream) {
  const std::size_t L = net.num_layers();
  require_dim(upstream.rows(), net.output_dim(), "mlp_backward upstream");
  require_dim(upstream.cols(), trace.inputs.at(0).cols(), "mlp_backward batch");
  Gradients g;
  g.params.resize(net.num_parameters());
  std::vector<Eigen::Index> offsets(L);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offsets[l] = off;
    off += net.weight(l).size() + net.bias(l).size();
  }
  Mat delta = upstream;
  for (std::size_t l = L; l-- > 0;) {
    const auto& w = net.weight(l);
    Eigen::Map<RowMat>(g.params.data() + offsets[l], w.rows(), w.cols()).noalias() =
        delta * trace.inputs[l].transpose();
    g.params.segment(offsets[l] + w.size(), w.rows()) = delta.rowwise().sum();
    Mat back = w.transpose() * delta;
    if (l == 0) {
      g.input = std::move(back);
    } else {
      delta = back.cwiseProduct(derivative(net.hidden_activation(), trace.preacts[l - 1]));
    }
  }
  return g;
}

Gradients backward(const Mlp& net, const Vec& x, const Vec& upstream) {
  ForwardTrace trace;
  forward(net, Mat(x), trace);
  return backward(net, trace, Mat(upstream));
}

Mat jacobian_input(const Mlp& net, const Vec& x) {
  require_dim(x.size(), net.input_dim(), "mlp_jacobian_input");
  ForwardTrace trace;
  forward(net, Mat(x), trace);
  const int out = net.output_dim();
  Mat jac(out, net.input_dim());
  // Row-by-row so each row is bit-identical to a unit-upstream backward.
  for (int i = 0; i < out; ++i) {
    jac.row(i) = backward(net, trace, Mat(Vec::Unit(out, i))).input.col(0).transpose();
  }
  return jac;
}

std::pair<Mat, Mat> forward_tangent(const Mlp& net, const Mat& batch, const Mat& directions,
                                    TangentTrace& trace) {
  require_dim(directions.rows(), batch.rows(), "forward_tangent directions");
  require_dim(directions.cols(), batch.cols(), "forward_tangent batch");
  forward(net, batch, trace.primal);
  Mat tangent = propagate_tangent(net, directions, trace);
  return {trace.primal.preacts.back(), std::move(tangent)};
}

Mat propagate_tangent(const Mlp& net, const Mat& directions, TangentTrace& trace) {
  require_dim(directions.rows(), net.input_dim(), "propagate_tangent directions");
  require_dim(directions.cols(), trace.primal.inputs.at(0).cols(), "propagate_tangent batch");
  const std::size_t L = net.num_layers();
  trace.tangents.resize(L);
  trace.tangent_preacts.resize(L);
  trace.tangents[0] = directions;
  for (std::size_t l = 0; l < L; ++l) {
    trace.tangent_preacts[l] = net.weight(l) * trace.tangents[l];
    if (l + 1 < L) {
      trace.tangents[l + 1] = trace.tangent_preacts[l].cwiseProduct(
          derivative(net.hidden_activation(), trace.primal.preacts[l]));
    }
  }
  return trace.tangent_preacts[L - 1];
}

Vec tangent_backward(const Mlp& net, const TangentTrace& trace, const Mat& value_upstream,
                     const Mat& tangent_upstream) {
  const std::size_t L = net.num_layers();
  require_dim(value_upstream.rows(), net.output_dim(), "tangent_backward value upstream");
  require_dim(tangent_upstream.rows(), net.output_dim(), "tangent_backward tangent upstream");
  Vec grad(net.num_parameters());
  std::vector<Eigen::Index> offsets(L);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offsets[l] = off;
    off += net.weight(l).size() + net.bias(l).size();
  }
  Mat zbar = value_upstream;   // adjoint of preacts[l]
  Mat ztbar = tangent_upstream;  // adjoint of tangent_preacts[l]
  const Activation act = net.hidden_activation();
  for (std::size_t l = L; l-- > 0;) {
    const auto& w = net.weight(l);
    Eigen::Map<RowMat>(grad.data() + offsets[l], w.rows(), w.cols()).noalias() =
        zbar * trace.primal.inputs[l].transpose() + ztbar * trace.tangents[l].transpose();
    grad.segment(offsets[l] + w.size(), w.rows()) = zbar.rowwise().sum();
    if (l == 0) break;
    const Mat abar = w.transpose() * zbar;
    const Mat tbar = w.transpose() * ztbar;
    const Mat& z = trace.primal.preacts[l - 1];
    const Mat d1 = derivative(act, z);
    zbar = abar.cwiseProduct(d1) +
           tbar.cwiseProduct(second_derivative(act, z)).cwiseProduct(trace.tangent_preacts[l - 1]);
    ztbar = tbar.cwiseProduct(d1);
  }
  return grad;
}

void adam_step(Vec& params, const Vec& grads, AdamState& state) {
  require_dim(grads.size(), params.size(), "adam_step grads");
  require_dim(state.first_moment.size(), params.size(), "adam_step state");
  const auto& c = state.config;
  ++state.step;
  state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grads;
  state.second_moment =
      c.beta2 * state.second_moment + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params.array() -= c.learning_rate * (state.first_moment.array() / bc1) /
                    ((state.second_moment.array() / bc2).sqrt() + c.epsilon);
}

std::string serialize(const Mlp& net) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["layer_dims"] = net.layer_dims();
  j["hidden_activation"] = std::string(to_string(net.hidden_activation()));
  j["output_activation"] = "identity";
  auto weights = nlohmann::json::array();
  auto biases = nlohmann::json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const RowMat w = net.weight(l);
    weights.push_back(std::vector<double>(w.data(), w.data() + w.size()));
    const Vec& b = net.bias(l);
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j.dump(1) + "\n";
}

Mlp deserialize(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model file: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw IoError("model file: unsupported format_version");
    }
    if (j.at("output_activation").get<std::string>() != "identity") {
      throw IoError("model file: output activation must be identity");
    }
    Mlp net(j.at("layer_dims").get<std::vector<int>>(),
            activation_from_string(j.at("hidden_activation").get<std::string>()));
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != net.num_layers() || biases.size() != net.num_layers()) {
      throw ShapeError("model file: layer count does not match layer_dims");
    }
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const auto w = weights[l].get<std::vector<double>>();
      const auto b = biases[l].get<std::vector<double>>();
      auto& W = net.weight(l);
      require_dim(static_cast<Eigen::Index>(w.size()), W.size(), "model file weights");
      require_dim(static_cast<Eigen::Index>(b.size()), net.bias(l).size(), "model file biases");
      W = Eigen::Map<const RowMat>(w.data(), W.rows(), W.cols());
      net.bias(l) = Eigen::Map<const Vec>(b.data(), static_cast<Eigen::Index>(b.size()));
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model file: ") + e.what());
  }
}

void save(const Mlp& net, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file " + path);
  out << serialize(net);
  if (!out) throw IoError("failed writing model file " + path);
}

Mlp load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace nicbf::nn
