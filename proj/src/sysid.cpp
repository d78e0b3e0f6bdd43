#include "nicbf/sysid.hpp"

#include <cmath>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "nicbf/csv.hpp"
#include "nicbf/random.hpp"
#include "nicbf/training.hpp"

namespace nicbf::sysid {
namespace {

Mat stack(const Mat& top, const Mat& bottom) {
  Mat z(top.rows() + bottom.rows(), top.cols());
  z.topRows(top.rows()) = top;
  z.bottomRows(bottom.rows()) = bottom;
  return z;
}

struct Rk4Trace {
  nn::ForwardTrace stage[4];
};

// Batched RK4 step of the net's field; the trace keeps what the reverse sweep needs.
Mat rk4_forward(const nn::Mlp& f, const Mat& x, const Mat& u, double dt, Rk4Trace* trace) {
  nn::ForwardTrace scratch;
  auto eval = [&](int s, const Mat& xs) -> Mat {
    return nn::forward(f, stack(xs, u), trace ? trace->stage[s] : scratch);
  };
  const Mat k1 = eval(0, x);
  const Mat k2 = eval(1, x + 0.5 * dt * k1);
  const Mat k3 = eval(2, x + 0.5 * dt * k2);
  const Mat k4 = eval(3, x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Parameter gradient of sum(upstream .* x_next).
Vec rk4_backward(const nn::Mlp& f, const Rk4Trace& trace, int n, double dt, const Mat& upstream) {
  Vec grad = Vec::Zero(f.num_parameters());
  Mat kbar[4] = {(dt / 6.0) * upstream, (dt / 3.0) * upstream, (dt / 3.0) * upstream,
                 (dt / 6.0) * upstream};
  // Stage s consumed x + c_s * k_{s-1}; propagate back into k_{s-1}.
  const double coeff[4] = {0.0, 0.5 * dt, 0.5 * dt, dt};
  for (int s = 3; s >= 0; --s) {
    const nn::Gradients g = nn::backward(f, trace.stage[s], kbar[s]);
    grad += g.params;
    if (s > 0) kbar[s - 1] += coeff[s] * g.input.topRows(n);
  }
  return grad;
}

void check_box(const Vec& lo, const Vec& hi, int dim, const char* what) {
  require_dim(lo.size(), dim, what);
  require_dim(hi.size(), dim, what);
  if (!lo.allFinite() || !hi.allFinite() || (hi.array() < lo.array()).any()) {
    throw ConfigError(std::string(what) + ": bounds must be finite with low <= high");
  }
}

nlohmann::json to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::size_t DynDataset::num_transitions() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.steps();
  return n;
}

void DynDataset::validate() const {
  for (const auto& t : trajectories) {
    t.validate();
    if (t.dt != dt) throw Error("DynDataset: trajectories must share dt");
    for (const auto& x : t.states) {
      if (!x.allFinite()) throw NumericError("DynDataset: non-finite state");
    }
    for (const auto& u : t.inputs) {
      if (!u.allFinite()) throw NumericError("DynDataset: non-finite input");
    }
  }
}

GenerationConfig default_generation(int n, int m) {
  GenerationConfig cfg;
  cfg.input_low = Vec::Zero(m);
  cfg.input_high = Vec::Ones(m);
  cfg.state_low = Vec::Zero(n);
  cfg.state_high = Vec::Ones(n);
  return cfg;
}

DynDataset gen_dynamics_data(const dynamics::SystemSpec& spec, const GenerationConfig& cfg) {
  if (!(cfg.dt > 0.0) || !(cfg.horizon > 0.0)) throw ConfigError("gen_dynamics_data: dt, horizon > 0");
  const double ratio = cfg.horizon / cfg.dt;
  const long steps = std::lround(ratio);
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-9 * std::max(1.0, ratio)) {
    throw ConfigError("gen_dynamics_data: horizon must be an integral multiple of dt");
  }
  check_box(cfg.input_low, cfg.input_high, spec.m, "gen_dynamics_data input bounds");
  check_box(cfg.state_low, cfg.state_high, spec.n, "gen_dynamics_data state bounds");

  DynDataset data;
  data.dt = cfg.dt;
  Rng rng(cfg.seed);
  while (static_cast<int>(data.trajectories.size()) < cfg.n_traj) {
    const Vec x0 = rng.uniform(cfg.state_low, cfg.state_high);
    std::vector<Vec> inputs;
    inputs.reserve(static_cast<std::size_t>(steps));
    for (long k = 0; k < steps; ++k) inputs.push_back(rng.uniform(cfg.input_low, cfg.input_high));
    try {
      data.trajectories.push_back(dynamics::rollout(spec, x0, inputs, cfg.dt));
    } catch (const NumericError&) {
      ++data.resampled;
    }
    if (data.resampled > cfg.max_resamples) {
      throw NumericError("gen_dynamics_data: too many diverging trajectories (" +
                         std::to_string(data.resampled) + ")");
    }
  }
  return data;
}

Transitions transitions(const std::vector<Trajectory>& trajs) {
  std::size_t total = 0;
  for (const auto& t : trajs) total += t.steps();
  Transitions tr;
  if (trajs.empty() || total == 0) return tr;
  const int n = trajs.front().state_dim();
  const int m = trajs.front().input_dim();
  tr.states.resize(n, static_cast<Eigen::Index>(total));
  tr.inputs.resize(m, static_cast<Eigen::Index>(total));
  tr.next.resize(n, static_cast<Eigen::Index>(total));
  Eigen::Index c = 0;
  for (const auto& t : trajs) {
    for (std::size_t k = 0; k < t.steps(); ++k, ++c) {
      tr.states.col(c) = t.states[k];
      tr.inputs.col(c) = t.inputs[k];
      tr.next.col(c) = t.states[k + 1];
    }
  }
  return tr;
}

Transitions transitions(const DynDataset& data) { return transitions(data.trajectories); }

dynamics::VectorField net_field(const nn::Mlp& model) {
  return [model](const Vec& x, const Vec& u) -> Vec {
    Vec z(x.size() + u.size());
    z << x, u;
    return model(z);
  };
}

dynamics::SystemSpec as_system(const nn::Mlp& model, int n, int m, std::string name) {
  require_dim(model.input_dim(), n + m, "as_system input dim");
  require_dim(model.output_dim(), n, "as_system output dim");
  dynamics::SystemSpec s;
  s.name = std::move(name);
  s.n = n;
  s.m = m;
  s.field = net_field(model);
  s.jacobian = [model, n, m](const Vec& x, const Vec& u, Mat& A, Mat& B) {
    Vec z(n + m);
    z << x, u;
    const Mat J = nn::jacobian_input(model, z);
    A = J.leftCols(n);
    B = J.rightCols(m);
  };
  return s;
}

Mat predict_step(const nn::Mlp& model, const Mat& states, const Mat& inputs, double dt) {
  require_dim(model.input_dim(), states.rows() + inputs.rows(), "predict_step model input");
  require_dim(model.output_dim(), states.rows(), "predict_step model output");
  const Mat next = rk4_forward(model, states, inputs, dt, nullptr);
  if (!next.allFinite()) throw NumericError("predict_step: non-finite prediction");
  return next;
}

Vec predict_step(const nn::Mlp& model, const Vec& x, const Vec& u, double dt) {
  return predict_step(model, Mat(x), Mat(u), dt).col(0);
}

double loss_dynamics(const nn::Mlp& model, const Transitions& batch, double dt, Vec* grad) {
  const auto n = batch.states.rows();
  require_dim(model.input_dim(), n + batch.inputs.rows(), "loss_dynamics model input");
  require_dim(model.output_dim(), n, "loss_dynamics model output");
  if (batch.states.cols() == 0) {
    if (grad) *grad = Vec::Zero(model.num_parameters());
    return 0.0;
  }
  Rk4Trace trace;
  const Mat pred = rk4_forward(model, batch.states, batch.inputs, dt, grad ? &trace : nullptr);
  const Mat err = pred - batch.next;
  if (grad) *grad = rk4_backward(model, trace, static_cast<int>(n), dt, 2.0 * err);
  return err.squaredNorm();
}

double loss_dynamics(const nn::Mlp& model, const DynDataset& data) {
  return loss_dynamics(model, transitions(data), data.dt, nullptr);
}

std::vector<Vec> predict_rollout(const nn::Mlp& model, const Vec& x0, const std::vector<Vec>& inputs,
                                 double dt) {
  std::vector<Vec> states{x0};
  states.reserve(inputs.size() + 1);
  for (const Vec& u : inputs) states.push_back(predict_step(model, states.back(), u, dt));
  return states;
}

std::pair<std::vector<Trajectory>, std::vector<Trajectory>> split_trajectories(
    const DynDataset& data, double validation_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(data.trajectories.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(
      std::floor(validation_fraction * static_cast<double>(order.size())));
  std::vector<Trajectory> train, val;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val : train).push_back(data.trajectories[order[i]]);
  }
  return {std::move(train), std::move(val)};
}

TrainResult train_dynamics(const DynDataset& data, const TrainConfig& cfg) {
  data.validate();
  if (data.trajectories.empty()) throw Error("train_dynamics: empty dataset");
  const int n = data.trajectories.front().state_dim();
  const int m = data.trajectories.front().input_dim();

  auto [train, val] = split_trajectories(data, cfg.validation_fraction, derive_seed(cfg.seed, 1));
  const Transitions tr = transitions(train);
  const Transitions va = val.empty() ? tr : transitions(val);

  std::vector<int> dims{n + m};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(n);
  TrainResult result;
  result.model = nn::Mlp::glorot(dims, cfg.activation, derive_seed(cfg.seed, 0));

  Transitions batch;
  auto objective = [&](const std::vector<std::size_t>& idx, Vec& grad) {
    const auto b = static_cast<Eigen::Index>(idx.size());
    batch.states.resize(n, b);
    batch.inputs.resize(m, b);
    batch.next.resize(n, b);
    for (Eigen::Index c = 0; c < b; ++c) {
      const auto j = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(c)]);
      batch.states.col(c) = tr.states.col(j);
      batch.inputs.col(c) = tr.inputs.col(j);
      batch.next.col(c) = tr.next.col(j);
    }
    const double loss = loss_dynamics(result.model, batch, data.dt, &grad);
    grad /= static_cast<double>(b);
    return loss / static_cast<double>(b);
  };
  auto validation = [&] { return loss_dynamics(result.model, va, data.dt, nullptr); };

  const AdamLoopResult loop = run_adam_loop(
      result.model, static_cast<std::size_t>(tr.states.cols()),
      AdamLoopConfig{cfg.epochs, cfg.batch_size, cfg.learning_rate, derive_seed(cfg.seed, 2)},
      objective, validation, "train_dynamics");
  result.best_validation_loss = loop.best_validation_loss;
  result.best_epoch = loop.best_epoch;
  result.validation_history = loop.validation_history;
  result.checkpoint_history = loop.checkpoint_history;
  return result;
}

void save_dataset(const DynDataset& data, const GenerationConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["dt"] = data.dt;
  manifest["seed"] = cfg.seed;
  manifest["n_traj"] = cfg.n_traj;
  manifest["horizon"] = cfg.horizon;
  manifest["input_low"] = to_json(cfg.input_low);
  manifest["input_high"] = to_json(cfg.input_high);
  manifest["state_low"] = to_json(cfg.state_low);
  manifest["state_high"] = to_json(cfg.state_high);
  manifest["resampled"] = data.resampled;
  auto files = nlohmann::json::array();
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "traj_%05zu.csv", i);
    dynamics::save_csv(data.trajectories[i], dir + "/" + name);
    files.push_back(name);
  }
  manifest["files"] = std::move(files);
  csv::write_file(dir + "/manifest.json", manifest.dump(1) + "\n");
}

DynDataset load_dataset(const std::string& dir) {
  const std::string manifest_path = dir + "/manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(csv::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path + ": " + e.what());
  }
  DynDataset data;
  try {
    data.dt = manifest.at("dt").get<double>();
    data.resampled = manifest.value("resampled", 0);
    for (const auto& f : manifest.at("files")) {
      auto traj = dynamics::load_csv(dir + "/" + f.get<std::string>());
      traj.dt = data.dt;
      data.trajectories.push_back(std::move(traj));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path + ": " + e.what());
  }
  data.validate();
  return data;
}

}  // namespace nicbf::sysid
