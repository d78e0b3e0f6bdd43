#include "nicbf/bench.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "nicbf/csv.hpp"
#include "nicbf/random.hpp"
#include "nicbf/timing.hpp"

namespace nicbf::bench {
namespace {

struct ReferenceRow {
  const char* method;
  double time_s;
  double cost;
};

// Published numbers for methods this harness does not implement.
const ReferenceRow kVehicleReference[] = {
    {"NMPC", 5.562, 4.583}, {"ORCA-MAPF", 1.373, 6.839}, {"CADRL", 0.837, 5.683}, {"Our approach", 0.736, 4.631}};
const ReferenceRow kQuadrotorReference[] = {
    {"NMPC", 10.242, 15.232}, {"ORCA-MAPF", 2.328, 21.281}, {"CADRL", 2.181, 19.283}, {"Our approach", 1.550, 15.672}};

Episode run_nmpc_episode(const icbf::EnvironmentSpec& env, const dynamics::SystemSpec& plant, const Vec& x0,
                         const BenchConfig& cfg) {
  Episode ep;
  const expert::StagePenalty penalty = obstacle_penalty(env, cfg.penalty_weight);
  dynamics::Trajectory traj;
  traj.dt = cfg.loop.dt;
  traj.states.push_back(x0);
  Vec x = x0;
  std::vector<Vec> warm;
  const double b = env.input_ball_radius;
  for (int k = 0; k < cfg.loop.max_steps; ++k) {
    if ((x - env.goal).norm() <= cfg.loop.goal_tolerance) break;
    const double t0 = thread_cpu_seconds();
    const expert::NmpcSolution sol =
        expert::solve_nmpc(plant, x, cfg.nmpc, warm.empty() ? nullptr : &warm, &penalty);
    ep.time_s += thread_cpu_seconds() - t0;
    const Vec u = sol.inputs.front();
    if (u.norm() > b + cfg.loop.input_slack) ++ep.input_violations;
    x = dynamics::rk4_step(plant, x, u, cfg.loop.dt);
    traj.inputs.push_back(u);
    traj.states.push_back(x);
    if (!env.state_safe(x)) ep.penetrated = true;
    warm = expert::shift_warm_start(sol.inputs);
  }
  ep.steps = static_cast<int>(traj.inputs.size());
  ep.reached = (x - env.goal).norm() <= cfg.loop.goal_tolerance;
  ep.cost = trajectory_cost(traj, cfg.nmpc.Q, cfg.nmpc.R);
  return ep;
}

}  // namespace

double trajectory_cost(const dynamics::Trajectory& traj, const Mat& Q, const Mat& R) {
  double cost = 0.0;
  for (std::size_t i = 0; i < traj.inputs.size(); ++i) {
    const Vec& x = traj.states[i + 1];
    const Vec& u = traj.inputs[i];
    require_dim(x.size(), Q.rows(), "trajectory_cost Q");
    require_dim(u.size(), R.rows(), "trajectory_cost R");
    cost += x.dot(Q * x) + u.dot(R * u);
  }
  return cost;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::nmpc: return "nmpc";
    case Method::proposed: return "proposed";
    case Method::nominal_unfiltered: return "nominal_unfiltered";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "nmpc") return Method::nmpc;
  if (s == "proposed") return Method::proposed;
  if (s == "nominal_unfiltered") return Method::nominal_unfiltered;
  throw ConfigError("unknown benchmark method '" + s + "'");
}

expert::StagePenalty obstacle_penalty(const icbf::EnvironmentSpec& env, double weight) {
  return [env, weight](const Vec& x_next, const Vec& u, Vec& gx, Vec& gu) {
    double cost = 0.0;
    const Vec pos = env.position(x_next);
    for (const auto& ob : env.obstacles) {
      const Vec d = pos - ob.center;
      const double r = d.norm();
      const double pen = ob.radius - r;
      if (pen <= 0.0 || r == 0.0) continue;
      cost += weight * pen * pen;
      for (std::size_t i = 0; i < env.position_indices.size(); ++i) {
        gx(env.position_indices[i]) += -2.0 * weight * pen * d(static_cast<Eigen::Index>(i)) / r;
      }
    }
    if (std::isfinite(env.input_ball_radius)) {
      const double un = u.norm();
      const double excess = un - env.input_ball_radius;
      if (excess > 0.0) {
        cost += weight * excess * excess;
        gu += (2.0 * weight * excess / un) * u;
      }
    }
    return cost;
  };
}

Mat sample_starts(const icbf::EnvironmentSpec& env, const BenchConfig& cfg) {
  const Vec lo = cfg.start_low.size() ? cfg.start_low : env.domain_low;
  const Vec hi = cfg.start_high.size() ? cfg.start_high : env.domain_high;
  require_dim(lo.size(), env.state_dim(), "bench start_low");
  require_dim(hi.size(), env.state_dim(), "bench start_high");
  if (cfg.n_avg < 1) throw ConfigError("bench: n_avg must be >= 1");
  Mat starts(env.state_dim(), cfg.n_avg);
  Rng rng(cfg.seed);
  const long max_draws = 10000L * cfg.n_avg;
  long draws = 0;
  for (int i = 0; i < cfg.n_avg; ++i) {
    Vec x;
    do {
      if (++draws > max_draws) throw ConfigError("bench: start box leaves no room outside the obstacles");
      x = rng.uniform(lo, hi);
    } while (env.clearance(x) < cfg.min_start_clearance);
    starts.col(i) = x;
  }
  return starts;
}

BenchmarkResult run_benchmark(const icbf::EnvironmentSpec& env, const dynamics::SystemSpec& plant,
                              const safectl::SafeController& proposed, const BenchConfig& cfg) {
  env.validate();
  cfg.nmpc.validate(plant.n, plant.m);
  const Mat starts = sample_starts(env, cfg);
  BenchmarkResult result;
  for (Method method : cfg.methods) {
    for (Eigen::Index s = 0; s < starts.cols(); ++s) {
      const Vec x0 = starts.col(s);
      Episode ep;
      try {
        if (method == Method::nmpc) {
          ep = run_nmpc_episode(env, plant, x0, cfg);
        } else {
          safectl::ClosedLoopConfig loop = cfg.loop;
          loop.filter = method == Method::proposed;
          const safectl::ClosedLoopResult run = safectl::run_closed_loop(env, plant, proposed, x0, loop);
          ep.cost = trajectory_cost(run.trajectory, cfg.nmpc.Q, cfg.nmpc.R);
          ep.time_s = run.metrics.control_time_s;
          ep.steps = run.metrics.steps;
          ep.reached = run.metrics.reached;
          ep.penetrated = run.metrics.penetrated;
          ep.input_violations = run.metrics.input_violations;
          if (run.metrics.aborted) {
            ep.failed = true;
            ep.error = run.metrics.abort_reason;
          }
        }
      } catch (const Error& e) {
        ep = Episode{};
        ep.failed = true;
        ep.error = e.what();
      }
      ep.method = method;
      ep.start = static_cast<int>(s);
      ep.x0 = x0;
      result.episodes.push_back(std::move(ep));
    }
  }
  result.rows = summarize(result.episodes, cfg.methods);
  return result;
}

std::vector<Row> summarize(const std::vector<Episode>& episodes, const std::vector<Method>& methods) {
  std::vector<Row> rows;
  for (Method method : methods) {
    Row row;
    row.method = to_string(method);
    int ok = 0, reached = 0;
    for (const auto& ep : episodes) {
      if (ep.method != method) continue;
      if (ep.failed) {
        ++row.failures;
        continue;
      }
      ++ok;
      row.mean_cost += ep.cost;
      row.mean_time_s += ep.time_s;
      if (ep.reached) ++reached;
      if (ep.penetrated || ep.input_violations > 0) ++row.violations;
    }
    if (ok > 0) {
      row.mean_cost /= ok;
      row.mean_time_s /= ok;
      row.success_rate = static_cast<double>(reached) / ok;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string table_csv(const std::vector<Row>& rows) {
  std::ostringstream out;
  out << "method,mean_cost,mean_time_s,success_rate,violations\n";
  for (const auto& r : rows) {
    out << csv::join({r.method, csv::format(r.mean_cost), csv::format(r.mean_time_s), csv::format(r.success_rate),
                      std::to_string(r.violations)})
        << '\n';
  }
  return out.str();
}

std::vector<Row> parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "method,mean_cost,mean_time_s,success_rate,violations") {
    throw IoError("benchmark table: unexpected header");
  }
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 5) throw IoError("benchmark table: bad row width");
    Row r;
    r.method = f[0];
    r.mean_cost = csv::parse_double(f[1]);
    r.mean_time_s = csv::parse_double(f[2]);
    r.success_rate = csv::parse_double(f[3]);
    r.violations = std::stoi(f[4]);
    rows.push_back(r);
  }
  return rows;
}

std::string episodes_csv(const std::vector<Episode>& episodes) {
  std::ostringstream out;
  out << "method,start,cost,time_s,steps,reached,penetrated,input_violations,failed\n";
  for (const auto& ep : episodes) {
    out << csv::join({to_string(ep.method), std::to_string(ep.start), csv::format(ep.cost), csv::format(ep.time_s),
                      std::to_string(ep.steps), ep.reached ? "1" : "0", ep.penetrated ? "1" : "0",
                      std::to_string(ep.input_violations), ep.failed ? "1" : "0"})
        << '\n';
  }
  return out.str();
}

std::string human_table(const std::vector<Row>& rows, const std::string& system_name) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %14s %14s %10s %11s\n", "method", "mean cost", "mean time (s)", "success",
                "violations");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-20s %14.6f %14.6f %10.3f %11d\n", r.method.c_str(), r.mean_cost,
                  r.mean_time_s, r.success_rate, r.violations);
    out << buf;
  }
  out << "\nTimes are thread CPU seconds spent computing control inputs per episode;\n"
         "simulation integration is excluded. Failed episodes are excluded from the means.\n";
  const bool quad = system_name == "quadrotor";
  out << "\nLiterature reference (published numbers, not produced by this run; "
      << (quad ? "quadrotor-pendulum" : "vehicle") << " table):\n";
  for (const auto& ref : quad ? kQuadrotorReference : kVehicleReference) {
    std::snprintf(buf, sizeof buf, "  %-14s comp. time %7.3f s   cost %7.3f\n", ref.method, ref.time_s, ref.cost);
    out << buf;
  }
  return out.str();
}

void export_report(const BenchmarkResult& result, const std::string& dir, const std::string& system_name) {
  csv::write_file(dir + "/table.csv", table_csv(result.rows));
  csv::write_file(dir + "/episodes.csv", episodes_csv(result.episodes));
  csv::write_file(dir + "/table.txt", human_table(result.rows, system_name));
}

}  // namespace nicbf::bench
