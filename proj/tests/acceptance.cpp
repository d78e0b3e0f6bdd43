// Acceptance runner: one PASS/FAIL line per criterion, then a tally.
// Usage: acceptance [output_root]
// Always exits 0 once every criterion has been evaluated; a crash or an
// unexpected exception exits non-zero.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "checks.hpp"
#include "nicbf/config.hpp"
#include "nicbf/csv.hpp"
#include "nicbf/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kConfigs = std::string(NICBF_SOURCE_DIR) + "/configs/";

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

json summary_of(const fs::path& out, const std::string& stage) {
  return json::parse(nicbf::csv::read_file((out / "manifests" / (stage + ".json")).string())).at("summary");
}

Verdict gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double plain = 0.0, composed = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    plain = std::max({plain, checks::mlp_parameter_gradient(seed), checks::mlp_input_gradient(seed)});
  }
  plain = std::max({plain, checks::mlp_tangent_gradient(4), checks::imitation_loss_gradient(6),
                    checks::shooting_gradient(9), checks::shooting_gradient(10)});
  composed = std::max({checks::dynamics_loss_gradient(5), checks::barrier_loss_gradient(7),
                       checks::barrier_loss_gradient(8)});
  const double t = seconds_since(t0);
  return {plain <= 1e-5 && composed <= 1e-4 && t < 30.0,
          "worst rel err " + fmt(plain) + " (limit 1e-5), composed " + fmt(composed) + " (limit 1e-4), " +
              fmt(t) + " s"};
}

Verdict qp() {
  const auto t0 = std::chrono::steady_clock::now();
  const checks::QpOracleResult r = checks::qp_oracle(11, 1000);
  const double t = seconds_since(t0);
  return {r.pairs == 1000 && r.max_residual <= 1e-9 && r.max_improvement <= 1e-6 && r.wrong_zero_branch == 0 &&
              t < 10.0,
          std::to_string(r.pairs) + " pairs, residual " + fmt(r.max_residual) + ", grid improvement " +
              fmt(r.max_improvement) + ", wrong zero branch " + std::to_string(r.wrong_zero_branch) + ", " + fmt(t) +
              " s"};
}

Verdict rk4() {
  const auto t0 = std::chrono::steady_clock::now();
  const double order = checks::rk4_order();
  const double t = seconds_since(t0);
  return {order >= 3.8 && order <= 4.2 && t < 1.0, "order " + fmt(order) + ", " + fmt(t) + " s"};
}

Verdict lqr() {
  const auto t0 = std::chrono::steady_clock::now();
  const double err = checks::nmpc_vs_lqr();
  const double t = seconds_since(t0);
  return {err <= 1e-4 && t < 10.0, "max input diff " + fmt(err) + ", " + fmt(t) + " s"};
}

Verdict sign_structure(const fs::path& out, double pipeline_s) {
  const json s = summary_of(out, "train-icbf");
  const double acc = s.at("validation_sign_accuracy");
  const double st = s.at("slice_state_agreement"), in = s.at("slice_input_agreement");
  const bool slices = fs::exists(out / "icbf" / "slice_state.csv") && fs::exists(out / "icbf" / "slice_input.csv");
  return {acc >= 0.99 && slices && st >= 0.99 && in >= 0.99 && pipeline_s < 1800.0,
          "held-out sign accuracy " + fmt(acc) + " (need 0.99), slice agreement state " + fmt(st) + " input " +
              fmt(in) + ", pipeline " + fmt(pipeline_s) + " s"};
}

Verdict closed_loop(const fs::path& out) {
  const json s = summary_of(out, "simulate");
  const int starts = s.at("starts"), pen = s.at("penetrations"), viol = s.at("input_violation_runs");
  const double reach = s.at("reach_rate");
  const bool adv = s.at("adversarial").at("unfiltered").at("penetrated");
  return {starts == 100 && pen == 0 && viol == 0 && reach >= 0.95 && adv,
          std::to_string(starts) + " starts, " + std::to_string(pen) + " penetrating runs, " + std::to_string(viol) +
              " runs with input violations, reach rate " + fmt(reach) + ", unfiltered adversarial run " +
              (adv ? "penetrates" : "does not penetrate")};
}

Verdict ratios(const fs::path& out) {
  const json rows = summary_of(out, "bench").at("rows");
  const json timing = json::parse(nicbf::csv::read_file((out / "manifests" / "bench.timing.json").string()));
  double nmpc_cost = 0.0, prop_cost = 0.0;
  for (const auto& r : rows) {
    if (r.at("method") == "nmpc") nmpc_cost = r.at("mean_cost");
    if (r.at("method") == "proposed") prop_cost = r.at("mean_cost");
  }
  const double nmpc_t = timing.at("mean_time_s").at("nmpc"), prop_t = timing.at("mean_time_s").at("proposed");
  const double time_ratio = prop_t / nmpc_t, cost_ratio = prop_cost / nmpc_cost;
  return {time_ratio <= 1.0 / 3.0 && cost_ratio <= 1.15,
          "time ratio " + fmt(time_ratio) + " (limit 0.333), cost ratio " + fmt(cost_ratio) + " (limit 1.15)"};
}

Verdict bound(const fs::path& out) {
  const json s = summary_of(out, "certify");
  const int states = s.at("states");
  const double rate = s.at("violation_rate");
  const bool exact = s.at("recomputes_exactly");
  return {states == 200 && rate <= 0.05 && exact,
          std::to_string(states) + " states, violation rate " + fmt(rate) + ", bound " + fmt(s.at("bound")) +
              ", recomputes exactly: " + (exact ? "yes" : "no")};
}

Verdict determinism(const fs::path& root) {
  const nicbf::config::Config cfg = nicbf::config::load(kConfigs + "smoke.json");
  const fs::path a = root / "smoke_a", b = root / "smoke_b";
  fs::remove_all(a);
  fs::remove_all(b);
  nicbf::pipeline::run_pipeline(cfg, a.string());
  nicbf::pipeline::run_pipeline(cfg, b.string());
  const checks::RunComparison c = checks::compare_runs(a.string(), b.string());
  std::string detail = std::to_string(c.files_compared) + " artifacts compared, " +
                       std::to_string(c.mismatches.size()) + " differ";
  for (const auto& m : c.mismatches) detail += " " + m;
  return {c.mismatches.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::create_directories(root);
  int passed = 0;
  auto report = [&](int id, const std::function<Verdict()>& f) {
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (v.pass) ++passed;
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
  };

  report(1, gradients);
  report(2, qp);
  report(3, rk4);
  report(4, lqr);

  const fs::path vehicle = root / "vehicle";
  double pipeline_s = 0.0;
  std::string pipeline_error;
  try {
    fs::remove_all(vehicle);
    const auto t0 = std::chrono::steady_clock::now();
    nicbf::pipeline::run_pipeline(nicbf::config::load(kConfigs + "vehicle.json"), vehicle.string());
    pipeline_s = seconds_since(t0);
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  auto after_pipeline = [&](std::function<Verdict()> f) {
    return [&, f] { return pipeline_error.empty() ? f() : Verdict{false, "vehicle pipeline failed: " + pipeline_error}; };
  };
  report(5, after_pipeline([&] { return sign_structure(vehicle, pipeline_s); }));
  report(6, after_pipeline([&] { return closed_loop(vehicle); }));
  report(7, after_pipeline([&] { return ratios(vehicle); }));
  report(8, after_pipeline([&] { return bound(vehicle); }));
  report(9, [&] { return determinism(root); });

  std::cout << passed << "/9 passed" << std::endl;
  return 0;
}
