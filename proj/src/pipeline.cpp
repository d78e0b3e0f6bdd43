#include "nicbf/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "nicbf/bench.hpp"
#include "nicbf/csv.hpp"
#include "nicbf/dynamics.hpp"
#include "nicbf/expert.hpp"
#include "nicbf/imitation.hpp"
#include "nicbf/random.hpp"
#include "nicbf/safectl.hpp"
#include "nicbf/sysid.hpp"

namespace nicbf::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kFormatVersion = 1;

enum StageSeed : std::uint64_t {
  kSeedDynData = 1,
  kSeedDynamics,
  kSeedExpert,
  kSeedPolicy,
  kSeedSamples,
  kSeedBarrier,
  kSeedSimulate,
  kSeedCertify,
  kSeedBench,
  kSeedRolloutCheck,
};

std::uint64_t stage_seed(const config::Config& cfg, StageSeed s) { return derive_seed(cfg.seed, s); }

struct Paths {
  std::string root;
  std::string dyn_data() const { return root + "/dyn_data"; }
  std::string expert() const { return root + "/expert/dataset.csv"; }
  std::string samples() const { return root + "/icbf/samples.csv"; }
  std::string dynamics_model() const { return root + "/models/dynamics.json"; }
  std::string policy_model() const { return root + "/models/policy.json"; }
  std::string barrier_model() const { return root + "/models/barrier.json"; }
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("missing input artifact: " + path);
}

nn::Mlp load_model(const std::string& path) {
  require_file(path);
  return nn::load(path);
}

dynamics::SystemSpec true_system(const config::Config& cfg) {
  return dynamics::make_system(cfg.system, cfg.system_params);
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void write_manifest(const std::string& stage, const config::Config& cfg, const std::string& root,
                    const std::vector<std::string>& artifacts, const json& summary, std::uint64_t seed,
                    double seconds) {
  json m;
  m["stage"] = stage;
  m["format_version"] = kFormatVersion;
  m["seed"] = seed;
  m["config_hash"] = config::hash(cfg);
  json sums = json::object();
  for (const auto& rel : artifacts) sums[rel] = csv::hex(csv::fnv1a(csv::read_file(root + "/" + rel)));
  m["artifacts"] = sums;
  m["summary"] = summary;
  csv::write_file(root + "/manifests/" + stage + ".json", m.dump(1) + "\n");
  json t;
  t["stage"] = stage;
  t["wall_seconds"] = seconds;
  csv::write_file(root + "/manifests/" + stage + ".timing.json", t.dump(1) + "\n");
}

std::vector<std::string> dataset_files(const std::string& root) {
  std::vector<std::string> files{"dyn_data/manifest.json"};
  const json manifest = json::parse(csv::read_file(root + "/dyn_data/manifest.json"));
  for (const auto& f : manifest.at("files")) files.push_back("dyn_data/" + f.get<std::string>());
  return files;
}

safectl::SafeController learned(const config::Config& cfg, const Paths& p) {
  return safectl::learned_controller(load_model(p.barrier_model()), load_model(p.dynamics_model()),
                                     load_model(p.policy_model()), cfg.tracking(), cfg.barrier.loss.gamma);
}

Mat joint(const Mat& states, const Mat& inputs) {
  Mat z(states.rows() + inputs.rows(), states.cols());
  z << states, inputs;
  return z;
}

// ---- stages ---------------------------------------------------------------

json stage_gen_dyn_data(const config::Config& cfg, const Paths& p, std::vector<std::string>& artifacts) {
  sysid::GenerationConfig g = cfg.dyn_data;
  g.seed = stage_seed(cfg, kSeedDynData);
  const sysid::DynDataset data = sysid::gen_dynamics_data(true_system(cfg), g);
  sysid::save_dataset(data, g, p.dyn_data());
  artifacts = dataset_files(p.root);
  return {{"trajectories", data.trajectories.size()},
          {"transitions", data.num_transitions()},
          {"resampled", data.resampled}};
}

json stage_train_dynamics(const config::Config& cfg, const Paths& p, std::vector<std::string>& artifacts) {
  require_file(p.dyn_data() + "/manifest.json");
  const sysid::DynDataset data = sysid::load_dataset(p.dyn_data());
  sysid::TrainConfig t = cfg.dynamics;
  t.seed = stage_seed(cfg, kSeedDynamics);
  const sysid::TrainResult r = sysid::train_dynamics(data, t);
  nn::save(r.model, p.dynamics_model());

  // Open-loop check from a fresh start under fresh inputs.
  const dynamics::SystemSpec spec = true_system(cfg);
  Rng rng(stage_seed(cfg, kSeedRolloutCheck));
  const Vec x0 = rng.uniform(cfg.dyn_data.state_low, cfg.dyn_data.state_high);
  const int steps = static_cast<int>(std::lround(cfg.dyn_data.horizon / cfg.dyn_data.dt));
  std::vector<Vec> inputs;
  for (int k = 0; k < steps; ++k) inputs.push_back(rng.uniform(cfg.dyn_data.input_low, cfg.dyn_data.input_high));
  json check;
  try {
    const dynamics::Trajectory truth = dynamics::rollout(spec, x0, inputs, cfg.dyn_data.dt);
    const std::vector<Vec> pred = sysid::predict_rollout(r.model, x0, inputs, cfg.dyn_data.dt);
    double worst = 0.0;
    std::ostringstream out;
    std::vector<std::string> header{"t"};
    for (int i = 1; i <= spec.n; ++i) header.push_back("x" + std::to_string(i));
    for (int i = 1; i <= spec.n; ++i) header.push_back("xhat" + std::to_string(i));
    out << csv::join(header) << '\n';
    for (std::size_t k = 0; k < pred.size(); ++k) {
      worst = std::max(worst, (pred[k] - truth.states[k]).norm());
      std::vector<std::string> row{csv::format(static_cast<double>(k) * cfg.dyn_data.dt)};
      for (int i = 0; i < spec.n; ++i) row.push_back(csv::format(truth.states[k](i)));
      for (int i = 0; i < spec.n; ++i) row.push_back(csv::format(pred[k](i)));
      out << csv::join(row) << '\n';
    }
    csv::write_file(p.root + "/sysid/rollout_check.csv", out.str());
    artifacts.push_back("sysid/rollout_check.csv");
    check = {{"max_step_error", worst},
             {"threshold", cfg.rollout_error_threshold},
             {"within_threshold", worst <= cfg.rollout_error_threshold}};
  } catch (const Error& e) {
    check = {{"error", e.what()}};
  }
  artifacts.push_back("models/dynamics.json");
  return {{"best_validation_loss", r.best_validation_loss},
          {"best_epoch", r.best_epoch},
          {"rollout_check", check}};
}

json stage_gen_expert(const config::Config& cfg, const Paths& p, std::vector<std::string>& artifacts) {
  expert::ExpertConfig e = cfg.expert;
  e.seed = stage_seed(cfg, kSeedExpert);
  expert::NmpcConfig n = cfg.nmpc;
  n.seed = e.seed;
  const expert::ExpertDataset data = expert::gen_expert_dataset(true_system(cfg), e, n);
  expert::save_dataset(data, p.expert());
  artifacts.push_back("expert/dataset.csv");
  return {{"pairs", data.size()}, {"starts", data.n_starts}, {"skipped_starts", data.skipped_starts}};
}

json stage_train_policy(const config::Config& cfg, const Paths& p, std::vector<std::string>& artifacts) {
  require_file(p.expert());
  const expert::ExpertDataset data = expert::load_dataset(p.expert(), true_system(cfg).n);
  imitation::TrainConfig t = cfg.policy;
  t.seed = stage_seed(cfg, kSeedPolicy);
  const imitation::TrainResult r = imitation::train_policy(data, t);
  nn::save(r.policy, p.policy_model());
  artifacts.push_back("models/policy.json");
  return {{"initial_validation_loss", r.initial_validation_loss},
          {"best_validation_loss", r.best_validation_loss},
          {"best_epoch", r.best_epoch},
          {"validation_rms", r.validation_rms}};
}

json stage_sample_icbf(const config::Config& cfg, const Paths& p, std::vector<std::string>& artifacts) {
  const dynamics::SystemSpec spec = true_system(cfg);
  const icbf::LabeledSet set =
      icbf::sample_labeled(cfg.environment, spec.m, cfg.n_samples, stage_seed(cfg, kSeedSamples));
  icbf::save_samples(set, p.samples());
  artifacts.push_back("icbf/samples.csv");
  json obstacles = json::array();
  for (const auto& ob : cfg.environment.obstacles) obstacles.push_back({{"center", vec_json(ob.center)}, {"radius", ob.radius}});
  return {{"samples", set.size()}, {"safe", set.num_safe()}, {"obstacles", obstacles}};
}

json stage_train_icbf(const config::Config& cfg, const Paths& p, std::vector<std::string>& artifacts) {
  require_file(p.samples());
  const dynamics::SystemSpec spec = true_system(cfg);
  const icbf::LabeledSet set = icbf::load_samples(p.samples(), spec.n);
  const nn::Mlp dyn = load_model(p.dynamics_model());
  const nn::Mlp pol = load_model(p.policy_model());
  icbf::TrainConfig t = cfg.barrier;
  t.seed = stage_seed(cfg, kSeedBarrier);
  t.loss.tracking_gain = cfg.tracking();
  json eps;
  if (cfg.epsilon_auto) {
    const certify::BoundComponents c = model_components(cfg, p.root, certify_states(cfg));
    const double e2 = certify::E2(c.L_phi, c.L_pi, c.delta2_policy, c.mu_policy);
    const double e1 = certify::E1(c.L_F, c.L_F_theta, c.delta1_dynamics, c.mu_dynamics);
    t.loss.epsilon = e2 + c.dt * (e1 + e2);
    eps["mode"] = "auto";
  } else {
    eps["mode"] = "fixed";
  }
  eps["value"] = t.loss.epsilon;
  const icbf::TrainResult r = icbf::train_icbf(set, dyn, pol, t);
  nn::save(r.barrier, p.barrier_model());
  artifacts.push_back("models/barrier.json");

  const SliceCheck slices = export_slices(r.barrier, cfg, p.root + "/icbf");
  artifacts.push_back("icbf/slice_state.csv");
  artifacts.push_back("icbf/slice_input.csv");
  return {{"epsilon", eps},
          {"best_validation_loss", r.best_validation_loss},
          {"best_epoch", r.best_epoch},
          {"train_loss", r.train_loss},
          {"validation_sign_accuracy", r.validation_accuracy},
          {"slice_state_agreement", slices.state_agreement},
          {"slice_input_agreement", slices.input_agreement}};
}

json stage_simulate(const config::Config& cfg, const Paths& p, std::vector<std::string>& artifacts,
                    json& timing) {
  const dynamics::SystemSpec truth = true_system(cfg);
  const safectl::SafeController ctl = learned(cfg, p);
  const dynamics::SystemSpec plant =
      cfg.simulate.learned_plant ? sysid::as_system(load_model(p.dynamics_model()), truth.n, truth.m) : truth;

  json runs = json::array();
  int penetrations = 0, violating = 0, reached = 0, infeasible = 0, aborted = 0;
  double control_time = 0.0;
  if (cfg.simulate.n_starts > 0) {
    bench::BenchConfig b;
    b.n_avg = cfg.simulate.n_starts;
    b.seed = stage_seed(cfg, kSeedSimulate);
    b.start_low = cfg.simulate.start_low;
    b.start_high = cfg.simulate.start_high;
    b.min_start_clearance = cfg.simulate.min_start_clearance;
    const Mat starts = bench::sample_starts(cfg.environment, b);
    for (Eigen::Index s = 0; s < starts.cols(); ++s) {
      const safectl::ClosedLoopResult run =
          safectl::run_closed_loop(cfg.environment, plant, ctl, starts.col(s), cfg.controller);
      char name[64];
      std::snprintf(name, sizeof name, "simulate/run_%03ld", static_cast<long>(s));
      dynamics::save_csv(run.trajectory, p.root + "/" + name + ".csv", truth.m);
      artifacts.push_back(std::string(name) + ".csv");
      const auto& mt = run.metrics;
      penetrations += mt.penetrated;
      violating += mt.input_violations > 0;
      reached += mt.reached;
      infeasible += mt.infeasible_steps;
      aborted += mt.aborted;
      control_time += mt.control_time_s;
      runs.push_back({{"start", vec_json(starts.col(s))},
                      {"reached", mt.reached},
                      {"steps", mt.steps},
                      {"penetrated", mt.penetrated},
                      {"min_clearance", mt.min_clearance},
                      {"max_input_norm", mt.max_input_norm},
                      {"input_violations", mt.input_violations},
                      {"infeasible_steps", mt.infeasible_steps},
                      {"aborted", mt.aborted}});
    }
    csv::write_file(p.root + "/simulate/runs.json", runs.dump(1) + "\n");
    artifacts.push_back("simulate/runs.json");
  }
  json summary = {{"starts", cfg.simulate.n_starts},
                  {"plant", cfg.simulate.learned_plant ? "learned" : "true"},
                  {"penetrations", penetrations},
                  {"input_violation_runs", violating},
                  {"reached", reached},
                  {"reach_rate", cfg.simulate.n_starts ? static_cast<double>(reached) / cfg.simulate.n_starts : 0.0},
                  {"infeasible_steps", infeasible},
                  {"aborted", aborted}};
  timing["control_time_s"] = control_time;

  if (cfg.simulate.adversarial_start.size()) {
    json adv;
    for (bool filter : {false, true}) {
      safectl::ClosedLoopConfig loop = cfg.controller;
      loop.filter = filter;
      const safectl::ClosedLoopResult run =
          safectl::run_closed_loop(cfg.environment, plant, ctl, cfg.simulate.adversarial_start, loop);
      const std::string name = filter ? "simulate/adversarial_filtered" : "simulate/adversarial_unfiltered";
      dynamics::save_csv(run.trajectory, p.root + "/" + name + ".csv", truth.m);
      artifacts.push_back(name + ".csv");
      adv[filter ? "filtered" : "unfiltered"] = {{"penetrated", run.metrics.penetrated},
                                                 {"min_clearance", run.metrics.min_clearance},
                                                 {"reached", run.metrics.reached},
                                                 {"input_violations", run.metrics.input_violations}};
    }
    summary["adversarial"] = adv;
  }
  return summary;
}

json stage_certify(const config::Config& cfg, const Paths& p, std::vector<std::string>& artifacts) {
  const dynamics::SystemSpec truth = true_system(cfg);
  const Mat states = certify_states(cfg);
  certify::BoundComponents c = model_components(cfg, p.root, states);

  const nn::Mlp barrier = load_model(p.barrier_model());
  require_file(p.samples());
  const icbf::LabeledSet set = icbf::load_samples(p.samples(), truth.n);
  const Mat zh = set.joint();
  const icbf::AnalyticBarrier h_true(cfg.environment, cfg.certify.smoothing_rho);
  const int n = truth.n;
  const double kappa = cfg.barrier.loss.gamma.gain;
  auto h_true_map = [&](const Vec& z) { return Vec::Constant(1, h_true.evaluate(z.head(n), z.tail(z.size() - n)).value); };
  auto h_theta_map = [&](const Vec& z) { return barrier(z); };
  auto gh_true = [&](const Vec& z) { return Vec(kappa * h_true_map(z)); };
  auto gh_theta = [&](const Vec& z) { return Vec(kappa * h_theta_map(z)); };
  const std::uint64_t seed = stage_seed(cfg, kSeedCertify);
  const int pairs = cfg.certify.lipschitz_pairs;
  c.L_h = certify::estimate_lipschitz(h_true_map, zh, pairs, derive_seed(seed, 10));
  c.L_h_theta = certify::estimate_lipschitz(h_theta_map, zh, pairs, derive_seed(seed, 10));
  c.L_gamma_h = certify::estimate_lipschitz(gh_true, zh, pairs, derive_seed(seed, 10));
  c.L_gamma_h_theta = certify::estimate_lipschitz(gh_theta, zh, pairs, derive_seed(seed, 10));

  const nn::Mlp pol = load_model(p.policy_model());
  Mat probes(n + truth.m, states.cols());
  for (Eigen::Index s = 0; s < states.cols(); ++s) probes.col(s) << states.col(s), pol(states.col(s));
  c.delta1_barrier = certify::fill_distance(zh, probes);
  c.mu_barrier = certify::model_discrepancy(gh_true, gh_theta, zh);

  certify::ErrorBoundReport report = certify::error_bound(c);

  // Oracle: true dynamics, analytic barrier, fresh NMPC first input as nominal.
  safectl::SafeController oracle;
  oracle.barrier = std::make_shared<icbf::AnalyticBarrier>(cfg.environment, cfg.certify.smoothing_rho);
  oracle.field = truth.field;
  expert::NmpcConfig nmpc = cfg.nmpc;
  nmpc.seed = seed;
  oracle.policy = [truth, nmpc](const Vec& x) -> Vec { return expert::solve_nmpc(truth, x, nmpc).inputs.front(); };
  oracle.tracking_gain = cfg.tracking();
  oracle.gamma = cfg.barrier.loss.gamma;
  const safectl::SafeController mine = learned(cfg, p);
  const certify::ValidationResult v =
      certify::validate_bound(oracle, mine, states, report.bound, cfg.controller.dt, cfg.controller.substeps);
  report.n_states = static_cast<int>(states.cols());
  report.n_skipped = v.skipped;
  report.n_violations = v.violations;
  report.violation_rate = v.violation_rate;
  csv::write_file(p.root + "/certify/report.json", certify::report_json(report));
  certify::save_validation_csv(v, p.root + "/certify/validation.csv");
  artifacts.push_back("certify/report.json");
  artifacts.push_back("certify/validation.csv");

  const certify::ErrorBoundReport reread = certify::parse_report(csv::read_file(p.root + "/certify/report.json"));
  double max_gap = 0.0;
  for (const auto& row : v.rows) max_gap = std::max(max_gap, row.gap);
  return {{"bound", report.bound},
          {"violation_rate", report.violation_rate},
          {"violations", report.n_violations},
          {"states", report.n_states},
          {"skipped", report.n_skipped},
          {"max_gap", max_gap},
          {"recomputes_exactly", certify::recomputes_exactly(reread)}};
}

json stage_bench(const config::Config& cfg, const Paths& p, std::vector<std::string>& artifacts, json& timing) {
  bench::BenchConfig b = cfg.bench;
  b.seed = stage_seed(cfg, kSeedBench);
  b.nmpc.seed = b.seed;
  const bench::BenchmarkResult r = bench::run_benchmark(cfg.environment, true_system(cfg), learned(cfg, p), b);
  bench::export_report(r, p.root + "/bench", cfg.system);
  artifacts.push_back("bench/episodes.csv");
  json rows = json::array();
  json times = json::object();
  for (const auto& row : r.rows) {
    rows.push_back({{"method", row.method},
                    {"mean_cost", row.mean_cost},
                    {"success_rate", row.success_rate},
                    {"violations", row.violations},
                    {"failures", row.failures}});
    times[row.method] = row.mean_time_s;
  }
  timing["mean_time_s"] = times;
  return {{"rows", rows}};
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"gen-dyn-data", "train-dynamics", "gen-expert",
                                              "train-policy", "sample-icbf",    "train-icbf",
                                              "simulate",     "certify",        "bench"};
  return names;
}

StageResult run_stage(const std::string& stage, const config::Config& cfg, const std::string& out_dir) {
  const Paths p{out_dir};
  StageResult result;
  result.stage = stage;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> artifacts;
  json timing = json::object();
  try {
    fs::create_directories(out_dir + "/manifests");
    csv::write_file(out_dir + "/config.json", config::canonical_json(cfg));
    std::uint64_t seed = 0;
    if (stage == "gen-dyn-data") {
      seed = stage_seed(cfg, kSeedDynData);
      result.summary = stage_gen_dyn_data(cfg, p, artifacts);
    } else if (stage == "train-dynamics") {
      seed = stage_seed(cfg, kSeedDynamics);
      result.summary = stage_train_dynamics(cfg, p, artifacts);
    } else if (stage == "gen-expert") {
      seed = stage_seed(cfg, kSeedExpert);
      result.summary = stage_gen_expert(cfg, p, artifacts);
    } else if (stage == "train-policy") {
      seed = stage_seed(cfg, kSeedPolicy);
      result.summary = stage_train_policy(cfg, p, artifacts);
    } else if (stage == "sample-icbf") {
      seed = stage_seed(cfg, kSeedSamples);
      result.summary = stage_sample_icbf(cfg, p, artifacts);
    } else if (stage == "train-icbf") {
      seed = stage_seed(cfg, kSeedBarrier);
      result.summary = stage_train_icbf(cfg, p, artifacts);
    } else if (stage == "simulate") {
      seed = stage_seed(cfg, kSeedSimulate);
      result.summary = stage_simulate(cfg, p, artifacts, timing);
    } else if (stage == "certify") {
      seed = stage_seed(cfg, kSeedCertify);
      result.summary = stage_certify(cfg, p, artifacts);
    } else if (stage == "bench") {
      seed = stage_seed(cfg, kSeedBench);
      result.summary = stage_bench(cfg, p, artifacts, timing);
    } else {
      throw ConfigError("unknown stage '" + stage + "'");
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(stage, cfg, out_dir, artifacts, result.summary, seed, result.seconds);
    if (!timing.empty()) {
      timing["wall_seconds"] = result.seconds;
      csv::write_file(out_dir + "/manifests/" + stage + ".timing.json", timing.dump(1) + "\n");
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  return result;
}

std::vector<StageResult> run_pipeline(const config::Config& cfg, const std::string& out_dir,
                                      const std::function<void(const StageResult&)>& on_stage) {
  std::vector<StageResult> results;
  for (const auto& stage : stage_names()) {
    results.push_back(run_stage(stage, cfg, out_dir));
    if (on_stage) on_stage(results.back());
  }
  return results;
}

Mat certify_states(const config::Config& cfg) {
  bench::BenchConfig b;
  b.n_avg = cfg.certify.n_states;
  b.seed = derive_seed(stage_seed(cfg, kSeedCertify), 1);
  b.start_low = cfg.certify.state_low;
  b.start_high = cfg.certify.state_high;
  b.min_start_clearance = cfg.certify.min_state_clearance;
  return bench::sample_starts(cfg.environment, b);
}

certify::BoundComponents model_components(const config::Config& cfg, const std::string& out_dir,
                                          const Mat& test_states) {
  const Paths p{out_dir};
  const dynamics::SystemSpec truth = true_system(cfg);
  const int n = truth.n;
  require_file(p.dyn_data() + "/manifest.json");
  require_file(p.expert());
  const sysid::Transitions tr = sysid::transitions(sysid::load_dataset(p.dyn_data()));
  const expert::ExpertDataset dc = expert::load_dataset(p.expert(), n);
  const nn::Mlp dyn = load_model(p.dynamics_model());
  const nn::Mlp pol = load_model(p.policy_model());
  const std::uint64_t seed = stage_seed(cfg, kSeedCertify);
  const int pairs = cfg.certify.lipschitz_pairs;

  certify::BoundComponents c;
  c.dt = cfg.controller.dt;
  const Mat zf = joint(tr.states, tr.inputs);
  auto f_true = [&](const Vec& z) { return truth(z.head(n), z.tail(z.size() - n)); };
  auto f_theta = [&](const Vec& z) { return dyn(z); };
  c.L_F = certify::estimate_lipschitz(f_true, zf, pairs, derive_seed(seed, 20));
  c.L_F_theta = certify::estimate_lipschitz(f_theta, zf, pairs, derive_seed(seed, 20));
  Mat probes(zf.rows(), test_states.cols());
  for (Eigen::Index s = 0; s < test_states.cols(); ++s) probes.col(s) << test_states.col(s), pol(test_states.col(s));
  c.delta1_dynamics = certify::fill_distance(zf, probes);
  c.mu_dynamics = certify::model_discrepancy(f_true, f_theta, zf);

  c.L_phi = certify::estimate_lipschitz(dc.states, dc.inputs, pairs, derive_seed(seed, 30));
  c.L_pi = certify::estimate_lipschitz([&](const Vec& x) { return pol(x); }, dc.states, pairs, derive_seed(seed, 30));
  c.delta2_policy = certify::fill_distance(dc.states, test_states);
  double mu = 0.0;
  const Mat pred = pol.forward(dc.states);
  for (Eigen::Index i = 0; i < dc.size(); ++i) mu = std::max(mu, (pred.col(i) - dc.inputs.col(i)).norm());
  c.mu_policy = mu;
  return c;
}

SliceCheck export_slices(const nn::Mlp& barrier, const config::Config& cfg, const std::string& dir) {
  const auto& env = cfg.environment;
  const int res = cfg.slice.resolution;
  const int n = env.state_dim();
  const auto m = static_cast<int>(cfg.slice.input.size());
  SliceCheck check;
  auto sweep = [&](bool over_state, const std::string& path) {
    std::ostringstream out;
    out << (over_state ? "x_a,x_b,h,label\n" : "u_a,u_b,h,label\n");
    int agree = 0;
    const int ia = over_state ? env.position_indices.at(0) : 0;
    const int ib = over_state ? env.position_indices.at(1) : 1;
    const double alo = over_state ? env.domain_low(ia) : -1.5 * env.input_ball_radius;
    const double ahi = over_state ? env.domain_high(ia) : 1.5 * env.input_ball_radius;
    const double blo = over_state ? env.domain_low(ib) : -1.5 * env.input_ball_radius;
    const double bhi = over_state ? env.domain_high(ib) : 1.5 * env.input_ball_radius;
    Vec z(n + m);
    for (int i = 0; i < res; ++i) {
      for (int j = 0; j < res; ++j) {
        const double a = alo + (ahi - alo) * i / (res - 1);
        const double b = blo + (bhi - blo) * j / (res - 1);
        Vec x = cfg.slice.state, u = cfg.slice.input;
        if (over_state) {
          x(ia) = a;
          x(ib) = b;
        } else {
          u(0) = a;
          u(1) = b;
        }
        z << x, u;
        const double h = barrier(z)(0);
        const bool safe = env.safe(x, u);
        agree += (h > 0.0) == safe;
        out << csv::join({csv::format(a), csv::format(b), csv::format(h), safe ? "1" : "0"}) << '\n';
      }
    }
    csv::write_file(path, out.str());
    return static_cast<double>(agree) / (static_cast<double>(res) * res);
  };
  check.state_agreement = sweep(true, dir + "/slice_state.csv");
  check.input_agreement = m >= 2 ? sweep(false, dir + "/slice_input.csv") : 1.0;
  if (m < 2) csv::write_file(dir + "/slice_input.csv", "u_a,u_b,h,label\n");
  return check;
}

}  // namespace nicbf::pipeline
