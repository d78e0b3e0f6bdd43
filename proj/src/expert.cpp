#include "nicbf/expert.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "nicbf/csv.hpp"
#include "nicbf/nn.hpp"
#include "nicbf/random.hpp"

namespace nicbf::expert {
namespace {

constexpr int kMaxRestarts = 5;

Vec flatten(const std::vector<Vec>& seq, int m) {
  Vec flat(static_cast<Eigen::Index>(seq.size()) * m);
  for (std::size_t k = 0; k < seq.size(); ++k) flat.segment(static_cast<Eigen::Index>(k) * m, m) = seq[k];
  return flat;
}

void unflatten(const Vec& flat, int m, std::vector<Vec>& seq) {
  for (std::size_t k = 0; k < seq.size(); ++k) seq[k] = flat.segment(static_cast<Eigen::Index>(k) * m, m);
}

}  // namespace

void NmpcConfig::validate(int n, int m) const {
  if (horizon_steps < 1) throw ConfigError("nmpc: horizon_steps must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("nmpc: dt must be positive");
  if (Q.rows() != n || Q.cols() != n) throw ConfigError("nmpc: Q must be n x n");
  if (R.rows() != m || R.cols() != m) throw ConfigError("nmpc: R must be m x m");
  if (!Q.isApprox(Q.transpose()) || !R.isApprox(R.transpose())) {
    throw ConfigError("nmpc: Q and R must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eq(Q), er(R);
  if (eq.eigenvalues().minCoeff() < -1e-12) throw ConfigError("nmpc: Q must be positive semidefinite");
  if (er.eigenvalues().minCoeff() <= 0.0) throw ConfigError("nmpc: R must be positive definite");
  if (max_iters < 1 || !(learning_rate > 0.0)) throw ConfigError("nmpc: bad iteration settings");
}

NmpcConfig default_nmpc(int n, int m) {
  NmpcConfig cfg;
  cfg.Q = Mat::Identity(n, n);
  cfg.R = 0.1 * Mat::Identity(m, m);
  return cfg;
}

double shooting_cost(const dynamics::SystemSpec& spec, const Vec& x0, const std::vector<Vec>& inputs,
                     const NmpcConfig& cfg, const StagePenalty* penalty, std::vector<Vec>* grad) {
  const std::size_t N = inputs.size();
  std::vector<Vec> xs{x0};
  std::vector<dynamics::StepSensitivity> sens(grad ? N : 0);
  std::vector<Vec> pen_gx, pen_gu;
  double cost = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    const Vec& x = xs.back();
    const Vec& u = inputs[k];
    cost += x.dot(cfg.Q * x) + u.dot(cfg.R * u);
    Vec next = grad ? dynamics::rk4_step(spec, x, u, cfg.dt, sens[k])
                    : dynamics::rk4_step(spec, x, u, cfg.dt);
    if (penalty) {
      Vec gx = Vec::Zero(spec.n), gu = Vec::Zero(spec.m);
      cost += (*penalty)(next, u, gx, gu);
      pen_gx.push_back(std::move(gx));
      pen_gu.push_back(std::move(gu));
    }
    xs.push_back(std::move(next));
  }
  if (grad) {
    grad->assign(N, Vec());
    Vec lambda = Vec::Zero(spec.n);  // d cost / d x_{k+1}, future terms included
    for (std::size_t k = N; k-- > 0;) {
      if (penalty) lambda += pen_gx[k];
      Vec g = 2.0 * (cfg.R * inputs[k]) + sens[k].du.transpose() * lambda;
      if (penalty) g += pen_gu[k];
      (*grad)[k] = std::move(g);
      lambda = 2.0 * (cfg.Q * xs[k]) + sens[k].dx.transpose() * lambda;
    }
  }
  return cost;
}

std::vector<Vec> shift_warm_start(const std::vector<Vec>& inputs) {
  if (inputs.empty()) return inputs;
  std::vector<Vec> shifted(inputs.begin() + 1, inputs.end());
  shifted.push_back(Vec::Zero(inputs.front().size()));
  return shifted;
}

NmpcSolution solve_nmpc(const dynamics::SystemSpec& spec, const Vec& x0, const NmpcConfig& cfg,
                        const std::vector<Vec>* warm_start, const StagePenalty* penalty) {
  require_dim(x0.size(), spec.n, "solve_nmpc x0");
  if (!x0.allFinite()) throw NumericError("solve_nmpc: non-finite initial state");
  cfg.validate(spec.n, spec.m);
  const int m = spec.m;
  const auto N = static_cast<std::size_t>(cfg.horizon_steps);

  std::vector<Vec> inputs(N, Vec::Zero(m));
  if (warm_start) {
    if (warm_start->size() != N) throw ShapeError("solve_nmpc: warm start length != horizon");
    inputs = *warm_start;
  }

  NmpcSolution sol;
  Vec params = flatten(inputs, m);
  Vec last_finite = params;
  double lr = cfg.learning_rate;
  nn::AdamState adam(params.size(), nn::AdamConfig{.learning_rate = lr});
  double best_cost = std::numeric_limits<double>::infinity();
  double prev_cost = best_cost;
  Vec best = params;
  std::vector<Vec> grad;

  for (int it = 0; it < cfg.max_iters; ++it) {
    unflatten(params, m, inputs);
    double cost;
    try {
      cost = shooting_cost(spec, x0, inputs, cfg, penalty, &grad);
    } catch (const NumericError&) {
      cost = std::numeric_limits<double>::quiet_NaN();
    }
    const Vec g = std::isfinite(cost) ? flatten(grad, m) : Vec();
    if (!std::isfinite(cost) || !g.allFinite()) {
      if (++sol.restarts > kMaxRestarts) {
        throw SolverDivergedError("solve_nmpc: non-finite cost after " +
                                  std::to_string(kMaxRestarts) + " learning-rate halvings");
      }
      lr *= 0.5;
      params = last_finite;
      adam = nn::AdamState(params.size(), nn::AdamConfig{.learning_rate = lr});
      continue;
    }
    last_finite = params;
    sol.iterations = it + 1;
    if (cost < best_cost) {
      best_cost = cost;
      best = params;
    }
    if (g.norm() <= cfg.grad_tol) {
      sol.converged = true;
      break;
    }
    if (cost > prev_cost) lr = std::max(lr * cfg.lr_decay, cfg.min_learning_rate);
    prev_cost = cost;
    adam.config.learning_rate = lr;
    nn::adam_step(params, g, adam);
  }
  if (!std::isfinite(best_cost)) {
    throw SolverDivergedError("solve_nmpc: no finite iterate");
  }
  sol.inputs.assign(N, Vec());
  unflatten(best, m, sol.inputs);
  sol.cost = best_cost;
  return sol;
}

ExpertDataset gen_expert_dataset(const dynamics::SystemSpec& spec, const ExpertConfig& cfg,
                                 const NmpcConfig& nmpc) {
  if (cfg.n_starts < 1) throw ConfigError("gen_expert_dataset: n_starts must be >= 1");
  if (cfg.receding_steps < 1) throw ConfigError("gen_expert_dataset: receding_steps must be >= 1");
  const Vec lo = cfg.state_low.size() ? cfg.state_low : Vec::Zero(spec.n);
  const Vec hi = cfg.state_high.size() ? cfg.state_high : Vec::Ones(spec.n);
  require_dim(lo.size(), spec.n, "gen_expert_dataset state_low");
  require_dim(hi.size(), spec.n, "gen_expert_dataset state_high");

  ExpertDataset data;
  data.n_starts = cfg.n_starts;
  std::vector<Vec> xs, us;
  Rng rng(cfg.seed);
  for (int s = 0; s < cfg.n_starts; ++s) {
    Vec x = rng.uniform(lo, hi);
    std::vector<Vec> start_x, start_u;
    try {
      std::vector<Vec> warm;
      for (int k = 0; k < cfg.receding_steps; ++k) {
        const NmpcSolution sol = solve_nmpc(spec, x, nmpc, warm.empty() ? nullptr : &warm);
        start_x.push_back(x);
        start_u.push_back(sol.inputs.front());
        x = dynamics::rk4_step(spec, x, sol.inputs.front(), nmpc.dt);
        warm = shift_warm_start(sol.inputs);
      }
    } catch (const SolverDivergedError&) {
      ++data.skipped_starts;
      continue;
    } catch (const NumericError&) {
      ++data.skipped_starts;
      continue;
    }
    xs.insert(xs.end(), start_x.begin(), start_x.end());
    us.insert(us.end(), start_u.begin(), start_u.end());
  }
  data.states.resize(spec.n, static_cast<Eigen::Index>(xs.size()));
  data.inputs.resize(spec.m, static_cast<Eigen::Index>(us.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    data.states.col(static_cast<Eigen::Index>(i)) = xs[i];
    data.inputs.col(static_cast<Eigen::Index>(i)) = us[i];
  }
  return data;
}

void save_dataset(const ExpertDataset& data, const std::string& csv_path) {
  std::ostringstream out;
  std::vector<std::string> header;
  for (Eigen::Index i = 1; i <= data.states.rows(); ++i) header.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 1; i <= data.inputs.rows(); ++i) header.push_back("u" + std::to_string(i));
  out << csv::join(header) << '\n';
  for (Eigen::Index c = 0; c < data.size(); ++c) {
    std::vector<std::string> row;
    for (Eigen::Index i = 0; i < data.states.rows(); ++i) row.push_back(csv::format(data.states(i, c)));
    for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) row.push_back(csv::format(data.inputs(i, c)));
    out << csv::join(row) << '\n';
  }
  csv::write_file(csv_path, out.str());
}

ExpertDataset load_dataset(const std::string& csv_path, int n) {
  std::istringstream in(csv::read_file(csv_path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(csv_path + ": missing header");
  const auto width = static_cast<int>(csv::split(line).size());
  const int m = width - n;
  if (m <= 0) throw IoError(csv_path + ": header narrower than the state dimension");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (static_cast<int>(f.size()) != width) throw IoError(csv_path + ": bad row width");
    std::vector<double> r;
    for (const auto& s : f) r.push_back(csv::parse_double(s));
    rows.push_back(std::move(r));
  }
  ExpertDataset data;
  data.states.resize(n, static_cast<Eigen::Index>(rows.size()));
  data.inputs.resize(m, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    for (int i = 0; i < n; ++i) data.states(i, static_cast<Eigen::Index>(c)) = rows[c][static_cast<std::size_t>(i)];
    for (int i = 0; i < m; ++i) {
      data.inputs(i, static_cast<Eigen::Index>(c)) = rows[c][static_cast<std::size_t>(n + i)];
    }
  }
  return data;
}

}  // namespace nicbf::expert
