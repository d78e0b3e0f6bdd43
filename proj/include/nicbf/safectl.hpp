#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nicbf/common.hpp"
#include "nicbf/dynamics.hpp"
#include "nicbf/icbf.hpp"
#include "nicbf/nn.hpp"

/// Closed-form QP filter, the integral safe controller and closed-loop runs.
namespace nicbf::safectl {

inline constexpr double kDefaultPTol = 1e-9;

/// Minimum-norm v with p'v >= q: zero when q <= 0, (q / |p|^2) p when q > 0 and
/// |p| > p_tol, nullopt (infeasible) when q > 0 and |p| <= p_tol.
std::optional<Vec> v_star(const Vec& p, double q, double p_tol = kDefaultPTol);

/// Everything the filter needs: a barrier, a dynamics field, the nominal
/// policy and the tracking gain of the integral law.
struct SafeController {
  std::shared_ptr<const icbf::Barrier> barrier;
  dynamics::VectorField field;
  icbf::Policy policy;
  double tracking_gain = 10.0;
  icbf::GammaSpec gamma;
  double p_tol = kDefaultPTol;

  icbf::IntegralLaw law() const { return icbf::tracking_law(policy, tracking_gain); }
};

/// Controller built from trained networks (h over [x; u], F over [x; u], pi over x).
SafeController learned_controller(const nn::Mlp& barrier, const nn::Mlp& dynamics_model,
                                  const nn::Mlp& policy, double tracking_gain, icbf::GammaSpec gamma);

struct SafeInputDiagnostics {
  std::vector<double> q_values;  // one per substep
  int infeasible_substeps = 0;
  int active_substeps = 0;       // substeps with q > 0 and a feasible update
  double input_norm = 0.0;       // |u_safe|
};

/// u <- pi(x), then `substeps` Euler steps u <- u + (dt / substeps) v*(p, q)
/// with p, q re-evaluated at the current u. Infeasible substeps leave u unchanged.
Vec safe_input(const SafeController& ctl, const Vec& x, double dt, int substeps,
               SafeInputDiagnostics* diag = nullptr);

struct ClosedLoopConfig {
  double dt = 0.1;
  int substeps = 5;
  double goal_tolerance = 0.05;  // stop once |x - goal| <= this
  int max_steps = 300;
  bool filter = true;            // false: apply pi(x) unmodified
  bool project_inputs = false;   // clip u onto |u| <= b after filtering
  double input_slack = 1e-3;
};

struct ClosedLoopMetrics {
  bool reached = false;
  int steps = 0;
  double min_clearance = 0.0;
  bool penetrated = false;       // some visited state inside an obstacle
  double max_input_norm = 0.0;
  int input_violations = 0;      // steps with |u| > b + slack (before projection)
  int infeasible_steps = 0;
  double control_time_s = 0.0;   // thread CPU time spent computing inputs
  std::vector<double> step_times_s;
  bool aborted = false;
  std::string abort_reason;
};

struct ClosedLoopResult {
  dynamics::Trajectory trajectory;
  ClosedLoopMetrics metrics;
};

/// Runs until within goal_tolerance of env.goal or max_steps, integrating
/// `plant` (true or learned dynamics) one dt per step. An integrator overflow
/// ends the run with the partial trajectory and `aborted` set.
ClosedLoopResult run_closed_loop(const icbf::EnvironmentSpec& env, const dynamics::SystemSpec& plant,
                                 const SafeController& ctl, const Vec& x0, const ClosedLoopConfig& cfg);

std::string metrics_json(const ClosedLoopMetrics& metrics);
void save_run(const ClosedLoopResult& run, const std::string& csv_path, const std::string& metrics_path);

}  // namespace nicbf::safectl
