#include "nicbf/certify.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "nicbf/csv.hpp"
#include "nicbf/random.hpp"

namespace nicbf::certify {
namespace {

constexpr double kDegenerate = 1e-9;

const char* const kComponentNames[] = {
    "L_F",          "L_F_theta",      "L_h",           "L_h_theta",   "L_phi",       "L_pi",
    "L_gamma_h",    "L_gamma_h_theta", "delta1_dynamics", "delta1_barrier", "delta2_policy",
    "mu_dynamics",  "mu_policy",      "mu_barrier",    "dt"};

std::vector<double*> fields(BoundComponents& c) {
  return {&c.L_F,       &c.L_F_theta,       &c.L_h,           &c.L_h_theta,      &c.L_phi,
          &c.L_pi,      &c.L_gamma_h,       &c.L_gamma_h_theta, &c.delta1_dynamics, &c.delta1_barrier,
          &c.delta2_policy, &c.mu_dynamics, &c.mu_policy,     &c.mu_barrier,     &c.dt};
}

}  // namespace

double estimate_lipschitz(const Mat& inputs, const Mat& outputs, int n_pairs, std::uint64_t seed) {
  const Eigen::Index N = inputs.cols();
  require_dim(outputs.cols(), N, "estimate_lipschitz outputs");
  if (N < 2) throw EstimationError("estimate_lipschitz: need at least 2 samples");
  if (n_pairs < 1) throw EstimationError("estimate_lipschitz: need at least 1 pair");
  double best = 0.0;
  bool any = false;
  for (int k = 0; k < n_pairs; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(N)));
    const auto j = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(N)));
    const double d = (inputs.col(i) - inputs.col(j)).norm();
    if (d < kDegenerate) continue;
    any = true;
    best = std::max(best, (outputs.col(i) - outputs.col(j)).norm() / d);
  }
  if (!any) throw EstimationError("estimate_lipschitz: every sampled pair is degenerate");
  return best;
}

double estimate_lipschitz(const Map& f, const Mat& points, int n_pairs, std::uint64_t seed) {
  if (points.cols() < 2) throw EstimationError("estimate_lipschitz: need at least 2 samples");
  const Vec first = f(points.col(0));
  Mat out(first.size(), points.cols());
  out.col(0) = first;
  for (Eigen::Index c = 1; c < points.cols(); ++c) out.col(c) = f(points.col(c));
  return estimate_lipschitz(points, out, n_pairs, seed);
}

double fill_distance(const Mat& data, const Mat& probes) {
  if (data.cols() == 0 || probes.cols() == 0) throw EstimationError("fill_distance: empty point set");
  require_dim(probes.rows(), data.rows(), "fill_distance probes");
  double worst = 0.0;
  for (Eigen::Index p = 0; p < probes.cols(); ++p) {
    const double nearest = (data.colwise() - probes.col(p)).colwise().squaredNorm().minCoeff();
    worst = std::max(worst, nearest);
  }
  return std::sqrt(worst);
}

double model_discrepancy(const Map& M, const Map& N, const Mat& points) {
  if (points.cols() == 0) throw EstimationError("model_discrepancy: empty point set");
  double worst = 0.0;
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    const Vec z = points.col(c);
    worst = std::max(worst, (M(z) - N(z)).norm());
  }
  return worst;
}

double E1(double L_M, double L_N, double delta, double mu) { return L_M * delta + L_N * delta + mu; }
double E2(double L_M, double L_N, double delta, double mu) { return L_M * delta + L_N * delta + mu; }
double E3(double L_M, double L_N) { return L_M + L_N; }

ErrorBoundReport error_bound(const BoundComponents& c) {
  BoundComponents copy = c;
  const auto f = fields(copy);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (std::isnan(*f[i])) throw EstimationError(std::string("error_bound: missing component ") + kComponentNames[i]);
    if (*f[i] < 0.0) throw EstimationError(std::string("error_bound: negative component ") + kComponentNames[i]);
  }
  ErrorBoundReport r;
  r.components = c;
  r.E1_dynamics = E1(c.L_F, c.L_F_theta, c.delta1_dynamics, c.mu_dynamics);
  r.E2_policy = E2(c.L_phi, c.L_pi, c.delta2_policy, c.mu_policy);
  r.E3_barrier = E3(c.L_h, c.L_h_theta);
  r.E1_barrier = E1(c.L_gamma_h, c.L_gamma_h_theta, c.delta1_barrier, c.mu_barrier);
  r.bound = r.E2_policy + c.dt * (3.0 * r.E3_barrier + r.E1_dynamics + r.E2_policy + r.E1_barrier);
  return r;
}

bool recomputes_exactly(const ErrorBoundReport& report) {
  const ErrorBoundReport again = error_bound(report.components);
  return again.E1_dynamics == report.E1_dynamics && again.E2_policy == report.E2_policy &&
         again.E3_barrier == report.E3_barrier && again.E1_barrier == report.E1_barrier &&
         again.bound == report.bound;
}

std::string report_json(const ErrorBoundReport& report) {
  nlohmann::json j;
  BoundComponents c = report.components;
  const auto f = fields(c);
  for (std::size_t i = 0; i < f.size(); ++i) j["components"][kComponentNames[i]] = *f[i];
  j["E1_dynamics"] = report.E1_dynamics;
  j["E2_policy"] = report.E2_policy;
  j["E3_barrier"] = report.E3_barrier;
  j["E1_barrier"] = report.E1_barrier;
  j["bound"] = report.bound;
  j["n_states"] = report.n_states;
  j["n_skipped"] = report.n_skipped;
  j["n_violations"] = report.n_violations;
  j["violation_rate"] = report.violation_rate;
  return j.dump(2) + "\n";
}

ErrorBoundReport parse_report(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ErrorBoundReport r;
    const auto f = fields(r.components);
    for (std::size_t i = 0; i < f.size(); ++i) *f[i] = j.at("components").at(kComponentNames[i]).get<double>();
    r.E1_dynamics = j.at("E1_dynamics").get<double>();
    r.E2_policy = j.at("E2_policy").get<double>();
    r.E3_barrier = j.at("E3_barrier").get<double>();
    r.E1_barrier = j.at("E1_barrier").get<double>();
    r.bound = j.at("bound").get<double>();
    r.n_states = j.at("n_states").get<int>();
    r.n_skipped = j.at("n_skipped").get<int>();
    r.n_violations = j.at("n_violations").get<int>();
    r.violation_rate = j.at("violation_rate").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("parse_report: ") + e.what());
  }
}

ValidationResult validate_bound(const safectl::SafeController& oracle, const safectl::SafeController& learned,
                                const Mat& states, double bound, double dt, int substeps) {
  ValidationResult result;
  for (Eigen::Index c = 0; c < states.cols(); ++c) {
    const Vec x = states.col(c);
    ValidationRow row;
    row.state = x;
    try {
      row.u_oracle = safectl::safe_input(oracle, x, dt, substeps);
    } catch (const SolverDivergedError&) {
      ++result.skipped;
      continue;
    }
    row.u_learned = safectl::safe_input(learned, x, dt, substeps);
    row.gap = (row.u_learned - row.u_oracle).norm();
    row.violated = row.gap > bound;
    if (row.violated) ++result.violations;
    result.rows.push_back(std::move(row));
  }
  if (!result.rows.empty()) {
    result.violation_rate = static_cast<double>(result.violations) / static_cast<double>(result.rows.size());
  }
  return result;
}

void save_validation_csv(const ValidationResult& result, const std::string& path) {
  std::ostringstream out;
  std::vector<std::string> header;
  const Eigen::Index n = result.rows.empty() ? 0 : result.rows.front().state.size();
  const Eigen::Index m = result.rows.empty() ? 0 : result.rows.front().u_oracle.size();
  for (Eigen::Index i = 1; i <= n; ++i) header.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 1; i <= m; ++i) header.push_back("u_oracle" + std::to_string(i));
  for (Eigen::Index i = 1; i <= m; ++i) header.push_back("u_learned" + std::to_string(i));
  header.emplace_back("gap");
  header.emplace_back("violated");
  out << csv::join(header) << '\n';
  for (const auto& r : result.rows) {
    std::vector<std::string> row;
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(csv::format(r.state(i)));
    for (Eigen::Index i = 0; i < m; ++i) row.push_back(csv::format(r.u_oracle(i)));
    for (Eigen::Index i = 0; i < m; ++i) row.push_back(csv::format(r.u_learned(i)));
    row.push_back(csv::format(r.gap));
    row.emplace_back(r.violated ? "1" : "0");
    out << csv::join(row) << '\n';
  }
  csv::write_file(path, out.str());
}

}  // namespace nicbf::certify
