#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nicbf/common.hpp"
#include "nicbf/dynamics.hpp"
#include "nicbf/expert.hpp"
#include "nicbf/icbf.hpp"
#include "nicbf/safectl.hpp"

/// Method comparison on seeded start states: trajectory cost, controller CPU
/// time, goal reaching and safety statistics.
namespace nicbf::bench {

/// sum_{i=1}^{N} x_i' Q x_i + sum_{i=0}^{N-1} u_i' R u_i over the executed steps.
double trajectory_cost(const dynamics::Trajectory& traj, const Mat& Q, const Mat& R);

enum class Method { nmpc, proposed, nominal_unfiltered };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// Soft penalty weight * (squared obstacle penetration + squared excess of |u| over b).
expert::StagePenalty obstacle_penalty(const icbf::EnvironmentSpec& env, double weight);

struct BenchConfig {
  int n_avg = 100;
  std::uint64_t seed = 0;
  Vec start_low;   // start box; defaults to the environment domain
  Vec start_high;
  double min_start_clearance = 0.05;
  std::vector<Method> methods{Method::nmpc, Method::proposed, Method::nominal_unfiltered};
  safectl::ClosedLoopConfig loop;
  expert::NmpcConfig nmpc;       // also provides Q and R of the cost
  double penalty_weight = 1e3;
};

struct Episode {
  Method method = Method::proposed;
  int start = 0;
  Vec x0;
  double cost = 0.0;
  double time_s = 0.0;
  int steps = 0;
  bool reached = false;
  bool penetrated = false;
  int input_violations = 0;
  bool failed = false;
  std::string error;
};

struct Row {
  std::string method;
  double mean_cost = 0.0;
  double mean_time_s = 0.0;
  double success_rate = 0.0;
  int violations = 0;  // episodes with a penetration or an input violation
  int failures = 0;    // episodes excluded from the means
};

struct BenchmarkResult {
  std::vector<Row> rows;
  std::vector<Episode> episodes;
};

/// Seeded start states outside every obstacle by at least min_start_clearance.
Mat sample_starts(const icbf::EnvironmentSpec& env, const BenchConfig& cfg);

/// Runs every requested method from the same starts. NMPC is receding horizon
/// on the true dynamics with obstacle_penalty; `proposed` is the filtered
/// closed loop; `nominal_unfiltered` applies pi(x) directly.
BenchmarkResult run_benchmark(const icbf::EnvironmentSpec& env, const dynamics::SystemSpec& plant,
                              const safectl::SafeController& proposed, const BenchConfig& cfg);

/// Averages over non-failed episodes of each method, in the order given.
std::vector<Row> summarize(const std::vector<Episode>& episodes, const std::vector<Method>& methods);

/// CSV with columns method,mean_cost,mean_time_s,success_rate,violations.
std::string table_csv(const std::vector<Row>& rows);
std::vector<Row> parse_table_csv(const std::string& text);
/// Per-episode CSV: method,start,cost,time_s,steps,reached,penetrated,input_violations,failed.
std::string episodes_csv(const std::vector<Episode>& episodes);
/// Aligned text table with a timing footer and the published reference rows.
std::string human_table(const std::vector<Row>& rows, const std::string& system_name);

/// Writes table.csv, episodes.csv and table.txt under `dir`.
void export_report(const BenchmarkResult& result, const std::string& dir, const std::string& system_name);

}  // namespace nicbf::bench
