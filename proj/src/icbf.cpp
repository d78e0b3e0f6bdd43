#include "nicbf/icbf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nicbf/csv.hpp"
#include "nicbf/random.hpp"
#include "nicbf/safectl.hpp"
#include "nicbf/training.hpp"

namespace nicbf::icbf {

void EnvironmentSpec::validate() const {
  if (domain_low.size() == 0 || domain_low.size() != domain_high.size()) {
    throw ConfigError("environment: domain box bounds must be non-empty and of equal length");
  }
  if ((domain_high.array() < domain_low.array()).any()) {
    throw ConfigError("environment: domain_high below domain_low");
  }
  if (!(input_ball_radius > 0.0)) throw ConfigError("environment: input_ball_radius must be positive");
  for (int idx : position_indices) {
    if (idx < 0 || idx >= state_dim()) throw ConfigError("environment: position index out of range");
  }
  for (const auto& ob : obstacles) {
    if (ob.center.size() != static_cast<Eigen::Index>(position_indices.size())) {
      throw ConfigError("environment: obstacle center dimension != number of position coordinates");
    }
    if (!(ob.radius > 0.0)) throw ConfigError("environment: obstacle radius must be positive");
    for (std::size_t i = 0; i < position_indices.size(); ++i) {
      const double c = ob.center(static_cast<Eigen::Index>(i));
      const int k = position_indices[i];
      if (c < domain_low(k) || c > domain_high(k)) {
        throw ConfigError("environment: obstacle center outside the domain box");
      }
    }
  }
  if (goal.size() != 0 && goal.size() != domain_low.size()) {
    throw ConfigError("environment: goal dimension != state dimension");
  }
}

Vec EnvironmentSpec::position(const Vec& x) const {
  Vec pos(static_cast<Eigen::Index>(position_indices.size()));
  for (std::size_t i = 0; i < position_indices.size(); ++i) pos(static_cast<Eigen::Index>(i)) = x(position_indices[i]);
  return pos;
}

double EnvironmentSpec::clearance(const Vec& x) const {
  double best = std::numeric_limits<double>::infinity();
  const Vec pos = position(x);
  for (const auto& ob : obstacles) best = std::min(best, (pos - ob.center).norm() - ob.radius);
  return best;
}

bool EnvironmentSpec::state_safe(const Vec& x) const { return clearance(x) > 0.0; }

bool EnvironmentSpec::input_admissible(const Vec& u) const {
  return u.squaredNorm() <= input_ball_radius * input_ball_radius;
}

std::size_t LabeledSet::num_safe() const {
  return static_cast<std::size_t>(std::count(safe.begin(), safe.end(), char{1}));
}

Mat LabeledSet::joint() const {
  Mat z(states.rows() + inputs.rows(), size());
  z.topRows(states.rows()) = states;
  z.bottomRows(inputs.rows()) = inputs;
  return z;
}

LabeledSet sample_labeled(const EnvironmentSpec& env, int m, int n_samples, std::uint64_t seed) {
  env.validate();
  if (n_samples < 2) throw ConfigError("sample_labeled: need at least 2 samples");
  if (m < 1) throw ConfigError("sample_labeled: input dimension must be >= 1");
  const int n = env.state_dim();
  const double b = env.input_ball_radius;
  const double half = std::isfinite(b) ? 1.5 * b : 1.0;
  const Vec ulo = Vec::Constant(m, -half), uhi = Vec::Constant(m, half);

  Rng rng(seed);
  std::vector<Vec> xs, us;
  std::vector<char> labels;
  auto draw = [&](Vec& x, Vec& u) {
    x = rng.uniform(env.domain_low, env.domain_high);
    u = rng.uniform(ulo, uhi);
    return static_cast<char>(env.safe(x, u));
  };
  for (int i = 0; i < n_samples; ++i) {
    Vec x, u;
    labels.push_back(draw(x, u));
    xs.push_back(std::move(x));
    us.push_back(std::move(u));
  }
  const auto n_safe = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), char{1}));
  if (n_safe == 0) throw NoSafeSamplesError("sample_labeled: no safe sample among " + std::to_string(n_samples));
  const double frac = static_cast<double>(n_safe) / n_samples;

  if ((frac < 0.2 || frac > 0.8) && n_safe < static_cast<std::size_t>(n_samples)) {
    // Rebalance to 50/50: keep the first half-count of each class, then
    // draw more until both quotas are filled.
    const std::size_t want_safe = static_cast<std::size_t>(n_samples) / 2;
    const std::size_t want_unsafe = static_cast<std::size_t>(n_samples) - want_safe;
    std::vector<Vec> bx, bu;
    std::vector<char> bl;
    std::size_t got_safe = 0, got_unsafe = 0;
    auto take = [&](Vec x, Vec u, char l) {
      if (l && got_safe < want_safe) {
        ++got_safe;
      } else if (!l && got_unsafe < want_unsafe) {
        ++got_unsafe;
      } else {
        return;
      }
      bx.push_back(std::move(x));
      bu.push_back(std::move(u));
      bl.push_back(l);
    };
    for (std::size_t i = 0; i < xs.size(); ++i) take(xs[i], us[i], labels[i]);
    const long max_draws = 1000L * n_samples;
    for (long d = 0; (got_safe < want_safe || got_unsafe < want_unsafe) && d < max_draws; ++d) {
      Vec x, u;
      const char l = draw(x, u);
      take(std::move(x), std::move(u), l);
    }
    if (got_safe < want_safe || got_unsafe < want_unsafe) {
      throw NoSafeSamplesError("sample_labeled: class rebalancing did not reach 50/50 within the draw budget");
    }
    xs = std::move(bx);
    us = std::move(bu);
    labels = std::move(bl);
  }

  LabeledSet set;
  set.states.resize(n, static_cast<Eigen::Index>(xs.size()));
  set.inputs.resize(m, static_cast<Eigen::Index>(us.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    set.states.col(static_cast<Eigen::Index>(i)) = xs[i];
    set.inputs.col(static_cast<Eigen::Index>(i)) = us[i];
  }
  set.safe = std::move(labels);
  return set;
}

NeuralBarrier::NeuralBarrier(const nn::Mlp& net, int n) : net_(net), n_(n) {
  if (net.output_dim() != 1) throw ShapeError("NeuralBarrier: network must have a scalar output");
  if (n < 0 || n >= net.input_dim()) throw ShapeError("NeuralBarrier: state dimension out of range");
}

BarrierEval NeuralBarrier::evaluate(const Vec& x, const Vec& u) const {
  require_dim(x.size() + u.size(), net_.input_dim(), "NeuralBarrier input");
  require_dim(x.size(), n_, "NeuralBarrier state");
  Vec z(net_.input_dim());
  z << x, u;
  nn::ForwardTrace trace;
  const Mat y = nn::forward(net_, Mat(z), trace);
  const nn::Gradients g = nn::backward(net_, trace, Mat::Ones(1, 1));
  BarrierEval e;
  e.value = y(0, 0);
  e.grad_x = g.input.col(0).head(n_);
  e.grad_u = g.input.col(0).tail(net_.input_dim() - n_);
  return e;
}

AnalyticBarrier::AnalyticBarrier(EnvironmentSpec env, double rho) : env_(std::move(env)), rho_(rho) {
  env_.validate();
  if (!(rho_ > 0.0)) throw ConfigError("AnalyticBarrier: smoothing rho must be positive");
}

BarrierEval AnalyticBarrier::evaluate(const Vec& x, const Vec& u) const {
  require_dim(x.size(), env_.state_dim(), "AnalyticBarrier state");
  // Components s_i with gradients, combined as -rho log sum exp(-s_i / rho).
  std::vector<double> s;
  std::vector<Vec> gx, gu;
  const Vec pos = env_.position(x);
  for (const auto& ob : env_.obstacles) {
    const Vec d = pos - ob.center;
    const double r = d.norm();
    s.push_back(r - ob.radius);
    Vec g = Vec::Zero(x.size());
    if (r > 0.0) {
      for (std::size_t i = 0; i < env_.position_indices.size(); ++i) {
        g(env_.position_indices[i]) = d(static_cast<Eigen::Index>(i)) / r;
      }
    }
    gx.push_back(std::move(g));
    gu.push_back(Vec::Zero(u.size()));
  }
  if (std::isfinite(env_.input_ball_radius)) {
    s.push_back(env_.input_ball_radius * env_.input_ball_radius - u.squaredNorm());
    gx.push_back(Vec::Zero(x.size()));
    gu.push_back(-2.0 * u);
  }
  BarrierEval e;
  e.grad_x = Vec::Zero(x.size());
  e.grad_u = Vec::Zero(u.size());
  if (s.empty()) {
    e.value = std::numeric_limits<double>::infinity();
    return e;
  }
  const double smin = *std::min_element(s.begin(), s.end());
  double total = 0.0;
  std::vector<double> w(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    w[i] = std::exp(-(s[i] - smin) / rho_);
    total += w[i];
  }
  e.value = smin - rho_ * std::log(total);
  for (std::size_t i = 0; i < s.size(); ++i) {
    e.grad_x += (w[i] / total) * gx[i];
    e.grad_u += (w[i] / total) * gu[i];
  }
  return e;
}

IntegralLaw tracking_law(Policy policy, double gain) {
  return [policy = std::move(policy), gain](const Vec& x, const Vec& u) -> Vec {
    return gain * (policy(x) - u);
  };
}

Policy policy_of(const nn::Mlp& net) {
  return [net](const Vec& x) -> Vec { return net(x); };
}

Vec icbf_p(const Barrier& h, const Vec& x, const Vec& u) { return h.evaluate(x, u).grad_u; }

double icbf_q(const Barrier& h, const dynamics::VectorField& field, const IntegralLaw& phi,
              const GammaSpec& gamma, const Vec& x, const Vec& u) {
  const BarrierEval e = h.evaluate(x, u);
  return -(e.grad_x.dot(field(x, u)) + e.grad_u.dot(phi(x, u)) + gamma(e.value));
}

IcbfLossTerms loss_icbf(const nn::Mlp& h, const nn::Mlp& dynamics_model, const nn::Mlp& policy,
                        const LabeledSet& samples, const IcbfLossConfig& cfg, Vec* grad) {
  const auto n = static_cast<int>(samples.states.rows());
  const auto m = static_cast<int>(samples.inputs.rows());
  require_dim(h.input_dim(), n + m, "loss_icbf barrier input");
  require_dim(h.output_dim(), 1, "loss_icbf barrier output");
  require_dim(dynamics_model.input_dim(), n + m, "loss_icbf dynamics input");
  require_dim(dynamics_model.output_dim(), n, "loss_icbf dynamics output");
  require_dim(policy.input_dim(), n, "loss_icbf policy input");
  require_dim(policy.output_dim(), m, "loss_icbf policy output");
  if (cfg.epsilon < 0.0) throw ConfigError("loss_icbf: epsilon must be >= 0");

  IcbfLossTerms terms;
  const Eigen::Index B = samples.size();
  if (B == 0) {
    if (grad) *grad = Vec::Zero(h.num_parameters());
    return terms;
  }
  const Mat z = samples.joint();
  nn::TangentTrace tt;
  const Mat hv = nn::forward(h, z, tt.primal);
  const Mat dh = nn::backward(h, tt.primal, Mat::Ones(1, B)).input;  // (n+m) x B
  const Mat f = dynamics_model.forward(z);
  const Mat phi = cfg.tracking_gain * (policy.forward(samples.states) - samples.inputs);
  const double eps = cfg.flip_epsilon_sign ? -cfg.epsilon : cfg.epsilon;

  Mat dirs = Mat::Zero(n + m, B);
  Mat value_up = Mat::Zero(1, B);
  Mat tangent_up = Mat::Zero(1, B);
  for (Eigen::Index c = 0; c < B; ++c) {
    const double hc = hv(0, c);
    if (!samples.safe[static_cast<std::size_t>(c)]) {
      if (hc > 0.0) {
        terms.unsafe_hinge += hc;
        value_up(0, c) += 1.0;
      }
      continue;
    }
    if (hc < 0.0) {
      terms.safe_hinge -= hc;
      value_up(0, c) -= 1.0;
    }
    const Vec p = dh.col(c).tail(m);
    const double q = -(dh.col(c).head(n).dot(f.col(c)) + p.dot(phi.col(c)) + cfg.gamma(hc));
    const std::optional<Vec> v = safectl::v_star(p, q, cfg.p_tol);
    // On the active feasible branch p'v* = q holds by construction; use the
    // identity so rounding cannot switch the hinge.
    const bool active = v && q > 0.0;
    const Vec vs = active ? *v : Vec::Zero(m);
    const double r = (active ? 0.0 : q) - eps;
    if (r > 0.0) {
      terms.derivative_hinge += r;
      // r = -(dh/dz . [F; phi + v*]) - gamma(h)
      dirs.col(c).head(n) = f.col(c);
      dirs.col(c).tail(m) = phi.col(c) + vs;
      tangent_up(0, c) = -1.0;
      value_up(0, c) -= cfg.gamma.gain;
    }
  }
  if (grad) {
    nn::propagate_tangent(h, dirs, tt);
    *grad = nn::tangent_backward(h, tt, value_up, tangent_up);
  }
  return terms;
}

double sign_accuracy(const nn::Mlp& h, const LabeledSet& samples) {
  if (samples.size() == 0) return 0.0;
  const Mat hv = h.forward(samples.joint());
  std::size_t correct = 0;
  for (Eigen::Index c = 0; c < samples.size(); ++c) {
    if ((hv(0, c) > 0.0) == static_cast<bool>(samples.safe[static_cast<std::size_t>(c)])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

LabeledSet subset(const LabeledSet& samples, const std::vector<std::size_t>& idx) {
  LabeledSet out;
  out.states.resize(samples.states.rows(), static_cast<Eigen::Index>(idx.size()));
  out.inputs.resize(samples.inputs.rows(), static_cast<Eigen::Index>(idx.size()));
  out.safe.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(idx[i]);
    out.states.col(static_cast<Eigen::Index>(i)) = samples.states.col(c);
    out.inputs.col(static_cast<Eigen::Index>(i)) = samples.inputs.col(c);
    out.safe.push_back(samples.safe[idx[i]]);
  }
  return out;
}

std::pair<LabeledSet, LabeledSet> split(const LabeledSet& samples, double validation_fraction,
                                        std::uint64_t seed) {
  const auto N = static_cast<std::size_t>(samples.size());
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(N)));
  const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  return {subset(samples, train), subset(samples, val)};
}

TrainResult train_icbf(const LabeledSet& samples, const nn::Mlp& dynamics_model,
                       const nn::Mlp& policy, const TrainConfig& cfg) {
  if (samples.size() == 0) throw Error("train_icbf: empty sample set");
  const auto n = static_cast<int>(samples.states.rows());
  const auto m = static_cast<int>(samples.inputs.rows());
  auto [train, val] = split(samples, cfg.validation_fraction, derive_seed(cfg.seed, 1));
  if (val.size() == 0) val = train;

  std::vector<int> dims{n + m};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(1);
  TrainResult result;
  result.barrier = nn::Mlp::glorot(dims, cfg.activation, derive_seed(cfg.seed, 0));

  const double val_scale = 1.0 / static_cast<double>(val.size());
  auto objective = [&](const std::vector<std::size_t>& idx, Vec& grad) {
    const LabeledSet batch = subset(train, idx);
    const double loss = loss_icbf(result.barrier, dynamics_model, policy, batch, cfg.loss, &grad).total();
    const double scale = 1.0 / static_cast<double>(idx.size());
    grad *= scale;
    return loss * scale;
  };
  auto validation = [&] {
    return loss_icbf(result.barrier, dynamics_model, policy, val, cfg.loss).total() * val_scale;
  };
  const AdamLoopResult loop = run_adam_loop(
      result.barrier, static_cast<std::size_t>(train.size()),
      AdamLoopConfig{cfg.epochs, cfg.batch_size, cfg.learning_rate, derive_seed(cfg.seed, 2)},
      objective, validation, "train_icbf");
  result.best_validation_loss = loop.best_validation_loss;
  result.best_epoch = loop.best_epoch;
  result.validation_history = loop.validation_history;
  result.train_loss = loss_icbf(result.barrier, dynamics_model, policy, train, cfg.loss).total() /
                      static_cast<double>(train.size());
  result.validation_accuracy = sign_accuracy(result.barrier, val);
  return result;
}

void save_samples(const LabeledSet& samples, const std::string& path) {
  std::ostringstream out;
  std::vector<std::string> header;
  for (Eigen::Index i = 1; i <= samples.states.rows(); ++i) header.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 1; i <= samples.inputs.rows(); ++i) header.push_back("u" + std::to_string(i));
  header.emplace_back("label");
  out << csv::join(header) << '\n';
  for (Eigen::Index c = 0; c < samples.size(); ++c) {
    std::vector<std::string> row;
    for (Eigen::Index i = 0; i < samples.states.rows(); ++i) row.push_back(csv::format(samples.states(i, c)));
    for (Eigen::Index i = 0; i < samples.inputs.rows(); ++i) row.push_back(csv::format(samples.inputs(i, c)));
    row.emplace_back(samples.safe[static_cast<std::size_t>(c)] ? "1" : "0");
    out << csv::join(row) << '\n';
  }
  csv::write_file(path, out.str());
}

LabeledSet load_samples(const std::string& path, int n) {
  std::istringstream in(csv::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": missing header");
  const auto width = static_cast<int>(csv::split(line).size());
  const int m = width - n - 1;
  if (m <= 0) throw IoError(path + ": header too narrow for the state dimension");
  std::vector<std::vector<double>> rows;
  std::vector<char> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (static_cast<int>(f.size()) != width) throw IoError(path + ": bad row width");
    std::vector<double> r;
    for (int i = 0; i < n + m; ++i) r.push_back(csv::parse_double(f[static_cast<std::size_t>(i)]));
    const std::string& l = f.back();
    if (l != "0" && l != "1") throw IoError(path + ": label must be 0 or 1");
    labels.push_back(l == "1" ? 1 : 0);
    rows.push_back(std::move(r));
  }
  LabeledSet set;
  set.states.resize(n, static_cast<Eigen::Index>(rows.size()));
  set.inputs.resize(m, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    for (int i = 0; i < n; ++i) set.states(i, static_cast<Eigen::Index>(c)) = rows[c][static_cast<std::size_t>(i)];
    for (int i = 0; i < m; ++i) set.inputs(i, static_cast<Eigen::Index>(c)) = rows[c][static_cast<std::size_t>(n + i)];
  }
  set.safe = std::move(labels);
  return set;
}

}  // namespace nicbf::icbf
