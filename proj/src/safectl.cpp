#include "nicbf/safectl.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "nicbf/csv.hpp"
#include "nicbf/sysid.hpp"
#include "nicbf/timing.hpp"

namespace nicbf::safectl {

std::optional<Vec> v_star(const Vec& p, double q, double p_tol) {
  if (!(q > 0.0)) return Vec::Zero(p.size());
  const double pn = p.norm();
  if (!(pn > p_tol)) return std::nullopt;
  return Vec((q / (pn * pn)) * p);
}

SafeController learned_controller(const nn::Mlp& barrier, const nn::Mlp& dynamics_model,
                                  const nn::Mlp& policy, double tracking_gain, icbf::GammaSpec gamma) {
  SafeController ctl;
  ctl.barrier = std::make_shared<icbf::NeuralBarrier>(barrier, policy.input_dim());
  ctl.field = sysid::net_field(dynamics_model);
  ctl.policy = icbf::policy_of(policy);
  ctl.tracking_gain = tracking_gain;
  ctl.gamma = gamma;
  return ctl;
}

Vec safe_input(const SafeController& ctl, const Vec& x, double dt, int substeps, SafeInputDiagnostics* diag) {
  if (!(dt > 0.0)) throw Error("safe_input: dt must be positive");
  if (substeps < 1) throw Error("safe_input: substeps must be >= 1");
  const Vec nominal = ctl.policy(x);
  Vec u = nominal;
  const double h = dt / substeps;
  for (int s = 0; s < substeps; ++s) {
    const icbf::BarrierEval e = ctl.barrier->evaluate(x, u);
    const Vec phi = ctl.tracking_gain * (nominal - u);
    const double q = -(e.grad_x.dot(ctl.field(x, u)) + e.grad_u.dot(phi) + ctl.gamma(e.value));
    if (diag) diag->q_values.push_back(q);
    if (!(q > 0.0)) continue;
    const std::optional<Vec> v = v_star(e.grad_u, q, ctl.p_tol);
    if (!v) {
      if (diag) ++diag->infeasible_substeps;
      continue;
    }
    if (diag) ++diag->active_substeps;
    u += h * *v;
  }
  if (diag) diag->input_norm = u.norm();
  return u;
}

ClosedLoopResult run_closed_loop(const icbf::EnvironmentSpec& env, const dynamics::SystemSpec& plant,
                                 const SafeController& ctl, const Vec& x0, const ClosedLoopConfig& cfg) {
  require_dim(x0.size(), plant.n, "run_closed_loop x0");
  require_dim(env.goal.size(), plant.n, "run_closed_loop goal");
  if (cfg.max_steps < 0) throw ConfigError("run_closed_loop: max_steps must be >= 0");
  const double b = env.input_ball_radius;

  ClosedLoopResult run;
  run.trajectory.dt = cfg.dt;
  run.trajectory.states.push_back(x0);
  ClosedLoopMetrics& mt = run.metrics;
  mt.min_clearance = env.clearance(x0);
  mt.penetrated = !env.state_safe(x0);

  Vec x = x0;
  for (int k = 0; k < cfg.max_steps; ++k) {
    if ((x - env.goal).norm() <= cfg.goal_tolerance) break;
    SafeInputDiagnostics diag;
    const double t0 = thread_cpu_seconds();
    Vec u = cfg.filter ? safe_input(ctl, x, cfg.dt, cfg.substeps, &diag) : ctl.policy(x);
    const double norm = u.norm();
    if (cfg.project_inputs && norm > b) u *= b / norm;
    const double elapsed = thread_cpu_seconds() - t0;
    mt.step_times_s.push_back(elapsed);
    mt.control_time_s += elapsed;
    if (diag.infeasible_substeps > 0) ++mt.infeasible_steps;
    if (norm > b + cfg.input_slack) ++mt.input_violations;
    mt.max_input_norm = std::max(mt.max_input_norm, norm);

    Vec next;
    try {
      next = dynamics::rk4_step(plant, x, u, cfg.dt);
    } catch (const NumericError& e) {
      mt.aborted = true;
      mt.abort_reason = e.what();
      break;
    }
    run.trajectory.inputs.push_back(u);
    run.trajectory.states.push_back(next);
    x = std::move(next);
    ++mt.steps;
    mt.min_clearance = std::min(mt.min_clearance, env.clearance(x));
    if (!env.state_safe(x)) mt.penetrated = true;
  }
  mt.reached = (x - env.goal).norm() <= cfg.goal_tolerance;
  return run;
}

std::string metrics_json(const ClosedLoopMetrics& mt) {
  nlohmann::json j;
  j["reached"] = mt.reached;
  j["steps"] = mt.steps;
  j["min_clearance"] = std::isfinite(mt.min_clearance) ? nlohmann::json(mt.min_clearance) : nlohmann::json(nullptr);
  j["penetrated"] = mt.penetrated;
  j["max_input_norm"] = mt.max_input_norm;
  j["input_violations"] = mt.input_violations;
  j["infeasible_steps"] = mt.infeasible_steps;
  j["control_time_s"] = mt.control_time_s;
  j["aborted"] = mt.aborted;
  if (mt.aborted) j["abort_reason"] = mt.abort_reason;
  return j.dump(2) + "\n";
}

void save_run(const ClosedLoopResult& run, const std::string& csv_path, const std::string& metrics_path) {
  const int m = run.trajectory.inputs.empty() ? -1 : static_cast<int>(run.trajectory.inputs.front().size());
  dynamics::save_csv(run.trajectory, csv_path, m);
  csv::write_file(metrics_path, metrics_json(run.metrics));
}

}  // namespace nicbf::safectl
