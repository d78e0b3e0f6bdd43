#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nicbf/common.hpp"
#include "nicbf/safectl.hpp"

/// Empirical instantiation of the learned-controller error bound: Lipschitz
/// estimates, covering radii, model discrepancies and validation against an
/// oracle controller.
namespace nicbf::certify {

using Map = std::function<Vec(const Vec&)>;

/// max over seeded sample pairs of |f(a) - f(b)| / |a - b|, pairs closer than
/// 1e-9 skipped. Pair k depends only on (seed, k), so a larger n_pairs
/// examines a superset of pairs. This is a lower bound of the true constant.
/// Throws EstimationError when every pair is degenerate.
double estimate_lipschitz(const Map& f, const Mat& points, int n_pairs, std::uint64_t seed);

/// Same ratio over precomputed (input, output) columns.
double estimate_lipschitz(const Mat& inputs, const Mat& outputs, int n_pairs, std::uint64_t seed);

/// Covering radius: max over probes of the distance to the nearest data point.
double fill_distance(const Mat& data, const Mat& probes);

/// max over points of |M(z) - N(z)|.
double model_discrepancy(const Map& M, const Map& N, const Mat& points);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Ingredients of the bound. Pair names: dynamics (F, F_theta) over the
/// dynamics data, policy (expert, pi_theta) over the expert data, barrier
/// (gamma h, gamma h_theta) over the labeled samples.
struct BoundComponents {
  double L_F = kMissing, L_F_theta = kMissing;
  double L_h = kMissing, L_h_theta = kMissing;
  double L_phi = kMissing, L_pi = kMissing;
  double L_gamma_h = kMissing, L_gamma_h_theta = kMissing;
  double delta1_dynamics = kMissing;  // joint-space covering radius of the dynamics data
  double delta1_barrier = kMissing;   // joint-space covering radius of the labeled samples
  double delta2_policy = kMissing;    // state-space covering radius of the expert data
  double mu_dynamics = kMissing;
  double mu_policy = kMissing;
  double mu_barrier = kMissing;
  double dt = kMissing;
};

/// E1(M, N) = L_M d + L_N d + mu.
double E1(double L_M, double L_N, double delta, double mu);
/// E2(M, N) = L_M d + L_N d + mu over the state-space radius.
double E2(double L_M, double L_N, double delta, double mu);
/// E3(M, N) = L_M + L_N.
double E3(double L_M, double L_N);

struct ErrorBoundReport {
  BoundComponents components;
  double E1_dynamics = 0.0;
  double E2_policy = 0.0;
  double E3_barrier = 0.0;
  double E1_barrier = 0.0;
  double bound = 0.0;
  // Filled by validation.
  int n_states = 0;
  int n_skipped = 0;
  int n_violations = 0;
  double violation_rate = 0.0;
};

/// bound = E2(phi, pi) + dt (3 E3(h, h_theta) + E1(F, F_theta) + E2(phi, pi)
///         + E1(gamma h, gamma h_theta)). Throws EstimationError on a missing
/// or negative component.
ErrorBoundReport error_bound(const BoundComponents& c);

/// Re-derives every E term and the bound from the stored components and
/// compares bit for bit.
bool recomputes_exactly(const ErrorBoundReport& report);

std::string report_json(const ErrorBoundReport& report);
ErrorBoundReport parse_report(const std::string& text);

struct ValidationRow {
  Vec state;
  Vec u_oracle;
  Vec u_learned;
  double gap = 0.0;
  bool violated = false;
};

struct ValidationResult {
  std::vector<ValidationRow> rows;
  int skipped = 0;
  int violations = 0;
  double violation_rate = 0.0;
};

/// Compares safe_input of the oracle and learned controllers on every state
/// column. States where the oracle throws SolverDivergedError are skipped.
ValidationResult validate_bound(const safectl::SafeController& oracle, const safectl::SafeController& learned,
                                const Mat& states, double bound, double dt, int substeps);

void save_validation_csv(const ValidationResult& result, const std::string& path);

}  // namespace nicbf::certify
