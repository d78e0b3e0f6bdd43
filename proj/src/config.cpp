#include "nicbf/config.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "nicbf/csv.hpp"
#include "nicbf/random.hpp"

namespace nicbf::config {
namespace {

using nlohmann::json;

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// Reads keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& dst) {
    if (!has(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path(key) + ": wrong type");
    }
  }

  void get_vec(const std::string& key, Vec& dst) {
    if (!has(key)) return;
    std::vector<double> v;
    get(key, v);
    dst = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  void get_activation(const std::string& key, nn::Activation& dst) {
    if (!has(key)) return;
    std::string s;
    get(key, s);
    try {
      dst = nn::activation_from_string(s);
    } catch (const Error&) {
      throw ConfigError(path(key) + ": unknown activation '" + s + "'");
    }
  }

  void get_diag(const std::string& key, Mat& dst) {
    if (!has(key)) return;
    Vec d;
    get_vec(key, d);
    dst = d.asDiagonal();
  }

  void get_positive(const std::string& key, double& dst) {
    get(key, dst);
    if (!(dst > 0.0)) throw ConfigError(path(key) + ": must be positive");
  }

  void get_count(const std::string& key, int& dst, int min) {
    get(key, dst);
    if (dst < min) throw ConfigError(path(key) + ": must be >= " + std::to_string(min));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_network(Section& s, std::vector<int>& hidden, nn::Activation& act, int& epochs, int& batch, double& lr,
                  double& val) {
  s.get("hidden", hidden);
  for (int h : hidden) {
    if (h < 1) throw ConfigError(s.path("hidden") + ": layer widths must be >= 1");
  }
  s.get_activation("activation", act);
  s.get_count("epochs", epochs, 0);
  s.get_count("batch_size", batch, 1);
  s.get_positive("learning_rate", lr);
  s.get("validation_fraction", val);
  if (val < 0.0 || val >= 1.0) throw ConfigError(s.path("validation_fraction") + ": must be in [0, 1)");
}

json network_json(const std::vector<int>& hidden, nn::Activation act, int epochs, int batch, double lr, double val) {
  return json{{"hidden", hidden},         {"activation", std::string(nn::to_string(act))},
              {"epochs", epochs},         {"batch_size", batch},
              {"learning_rate", lr},      {"validation_fraction", val}};
}

}  // namespace

Config defaults(const std::string& system) {
  Config cfg;
  cfg.system = system;
  const dynamics::SystemSpec spec = dynamics::make_system(system);
  const int n = spec.n, m = spec.m;
  cfg.dyn_data = sysid::default_generation(n, m);
  cfg.nmpc = expert::default_nmpc(n, m);
  cfg.expert.state_low = Vec::Zero(n);
  cfg.expert.state_high = Vec::Ones(n);

  auto& env = cfg.environment;
  env.goal = Vec::Zero(n);
  if (system == "vehicle") {
    env.domain_low = Vec::Constant(n, -0.25);
    env.domain_high = Vec::Constant(n, 1.25);
    env.position_indices = {0, 1};
    env.input_ball_radius = 0.5;
    env.obstacles = {{(Vec(2) << 0.5, 0.5).finished(), 0.15}, {(Vec(2) << 0.8, 0.15).finished(), 0.1}};
  } else {
    env.domain_low = Vec::Constant(n, -0.5);
    env.domain_high = Vec::Constant(n, 1.5);
    env.position_indices = {0, 1, 2};
    env.input_ball_radius = 15.0;
    RandomObstacles ro;
    ro.count = 3;
    ro.center_low = Vec::Constant(3, 0.2);
    ro.center_high = Vec::Constant(3, 0.8);
    cfg.random_obstacles = ro;
  }
  cfg.bench.nmpc = cfg.nmpc;
  cfg.slice.input = Vec::Zero(m);
  cfg.slice.state = Vec::Zero(n);
  return cfg;
}

Config parse(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Config cfg;
  {
    Section top(root, "config");
    std::string system = "vehicle";
    if (top.has("system")) {
      Section s(top.raw("system"), "system");
      s.get("name", system);
      cfg = defaults(system);
      if (s.has("params")) {
        Section p(s.raw("params"), "system.params");
        for (const char* key : {"mass", "ixx", "iyy", "izz", "gravity"}) {
          if (p.has(key)) {
            double v = 0.0;
            p.get(key, v);
            cfg.system_params[key] = v;
          }
        }
      }
    } else {
      cfg = defaults(system);
    }
    const dynamics::SystemSpec spec = dynamics::make_system(cfg.system, cfg.system_params);
    const int n = spec.n, m = spec.m;

    top.get("seed", cfg.seed);

    if (top.has("dynamics_data")) {
      Section s(top.raw("dynamics_data"), "dynamics_data");
      auto& d = cfg.dyn_data;
      s.get_count("n_traj", d.n_traj, 0);
      s.get_positive("horizon", d.horizon);
      s.get_positive("dt", d.dt);
      s.get_vec("input_low", d.input_low);
      s.get_vec("input_high", d.input_high);
      s.get_vec("state_low", d.state_low);
      s.get_vec("state_high", d.state_high);
      s.get_count("max_resamples", d.max_resamples, 0);
    }
    if (top.has("sysid")) {
      Section s(top.raw("sysid"), "sysid");
      auto& t = cfg.dynamics;
      read_network(s, t.hidden, t.activation, t.epochs, t.batch_size, t.learning_rate, t.validation_fraction);
      s.get_positive("rollout_error_threshold", cfg.rollout_error_threshold);
    }
    if (top.has("nmpc")) {
      Section s(top.raw("nmpc"), "nmpc");
      auto& c = cfg.nmpc;
      s.get_count("horizon_steps", c.horizon_steps, 1);
      s.get_positive("dt", c.dt);
      s.get_diag("Q_diag", c.Q);
      s.get_diag("R_diag", c.R);
      s.get_count("max_iters", c.max_iters, 1);
      s.get("grad_tol", c.grad_tol);
      s.get_positive("learning_rate", c.learning_rate);
      s.get_positive("lr_decay", c.lr_decay);
      s.get_positive("min_learning_rate", c.min_learning_rate);
    }
    cfg.nmpc.validate(n, m);
    if (top.has("expert")) {
      Section s(top.raw("expert"), "expert");
      s.get_count("n_starts", cfg.expert.n_starts, 1);
      s.get_count("receding_steps", cfg.expert.receding_steps, 1);
      s.get_vec("state_low", cfg.expert.state_low);
      s.get_vec("state_high", cfg.expert.state_high);
    }
    if (top.has("imitation")) {
      Section s(top.raw("imitation"), "imitation");
      auto& t = cfg.policy;
      read_network(s, t.hidden, t.activation, t.epochs, t.batch_size, t.learning_rate, t.validation_fraction);
    }
    if (top.has("environment")) {
      Section s(top.raw("environment"), "environment");
      auto& env = cfg.environment;
      s.get_vec("domain_low", env.domain_low);
      s.get_vec("domain_high", env.domain_high);
      s.get_vec("goal", env.goal);
      s.get("position_indices", env.position_indices);
      if (s.has("input_ball_radius")) {
        const json& b = s.raw("input_ball_radius");
        if (b.is_string() && b.get<std::string>() == "inf") {
          env.input_ball_radius = std::numeric_limits<double>::infinity();
        } else if (b.is_number()) {
          env.input_ball_radius = b.get<double>();
        } else {
          throw ConfigError(s.path("input_ball_radius") + ": expected a number or \"inf\"");
        }
      }
      if (s.has("obstacles")) {
        env.obstacles.clear();
        cfg.random_obstacles.reset();
        const json& list = s.raw("obstacles");
        if (!list.is_array()) throw ConfigError(s.path("obstacles") + ": expected an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
          Section o(list[i], s.path("obstacles") + "[" + std::to_string(i) + "]");
          icbf::Obstacle ob;
          o.get_vec("center", ob.center);
          o.get("radius", ob.radius);
          env.obstacles.push_back(ob);
        }
      }
      if (s.has("random_obstacles")) {
        Section o(s.raw("random_obstacles"), s.path("random_obstacles"));
        RandomObstacles ro = cfg.random_obstacles.value_or(RandomObstacles{});
        o.get_count("count", ro.count, 0);
        o.get_positive("radius_low", ro.radius_low);
        o.get_positive("radius_high", ro.radius_high);
        o.get_vec("center_low", ro.center_low);
        o.get_vec("center_high", ro.center_high);
        if (ro.radius_high < ro.radius_low) throw ConfigError(o.path("radius_high") + ": below radius_low");
        env.obstacles.clear();
        cfg.random_obstacles = ro;
      }
    }
    if (top.has("icbf")) {
      Section s(top.raw("icbf"), "icbf");
      auto& t = cfg.barrier;
      s.get_count("n_samples", cfg.n_samples, 2);
      read_network(s, t.hidden, t.activation, t.epochs, t.batch_size, t.learning_rate, t.validation_fraction);
      if (s.has("epsilon")) {
        const json& e = s.raw("epsilon");
        if (e.is_string() && e.get<std::string>() == "auto") {
          cfg.epsilon_auto = true;
        } else if (e.is_number() && e.get<double>() >= 0.0) {
          cfg.epsilon_auto = false;
          t.loss.epsilon = e.get<double>();
        } else {
          throw ConfigError(s.path("epsilon") + ": expected a number >= 0 or \"auto\"");
        }
      }
      s.get("flip_epsilon_sign", t.loss.flip_epsilon_sign);
      s.get_positive("gamma_gain", t.loss.gamma.gain);
      if (s.has("tracking_gain")) {
        double g = 0.0;
        s.get_positive("tracking_gain", g);
        cfg.tracking_gain = g;
      }
      s.get_positive("p_tol", t.loss.p_tol);
    }
    if (top.has("controller")) {
      Section s(top.raw("controller"), "controller");
      auto& c = cfg.controller;
      s.get_positive("dt", c.dt);
      s.get_count("substeps", c.substeps, 1);
      s.get_positive("goal_tolerance", c.goal_tolerance);
      s.get_count("max_steps", c.max_steps, 0);
      s.get("project_inputs", c.project_inputs);
      s.get("input_slack", c.input_slack);
    }
    if (top.has("simulate")) {
      Section s(top.raw("simulate"), "simulate");
      auto& c = cfg.simulate;
      s.get_count("n_starts", c.n_starts, 0);
      if (s.has("plant")) {
        std::string plant;
        s.get("plant", plant);
        if (plant != "true" && plant != "learned") throw ConfigError(s.path("plant") + ": expected true or learned");
        c.learned_plant = plant == "learned";
      }
      s.get_vec("start_low", c.start_low);
      s.get_vec("start_high", c.start_high);
      s.get("min_start_clearance", c.min_start_clearance);
      s.get_vec("adversarial_start", c.adversarial_start);
    }
    if (top.has("certify")) {
      Section s(top.raw("certify"), "certify");
      auto& c = cfg.certify;
      s.get_count("n_states", c.n_states, 1);
      s.get_count("lipschitz_pairs", c.lipschitz_pairs, 1);
      s.get_positive("smoothing_rho", c.smoothing_rho);
      s.get_vec("state_low", c.state_low);
      s.get_vec("state_high", c.state_high);
      s.get("min_state_clearance", c.min_state_clearance);
    }
    if (top.has("bench")) {
      Section s(top.raw("bench"), "bench");
      auto& c = cfg.bench;
      s.get_count("n_avg", c.n_avg, 1);
      s.get_vec("start_low", c.start_low);
      s.get_vec("start_high", c.start_high);
      s.get("min_start_clearance", c.min_start_clearance);
      s.get_positive("penalty_weight", c.penalty_weight);
      if (s.has("methods")) {
        std::vector<std::string> names;
        s.get("methods", names);
        c.methods.clear();
        for (const auto& name : names) c.methods.push_back(bench::method_from_string(name));
      }
    }
    if (top.has("slice")) {
      Section s(top.raw("slice"), "slice");
      s.get_count("resolution", cfg.slice.resolution, 2);
      s.get_vec("input", cfg.slice.input);
      s.get_vec("state", cfg.slice.state);
    }

    // Cross-section consistency.
    require_dim(cfg.dyn_data.input_low.size(), m, "dynamics_data.input_low");
    require_dim(cfg.dyn_data.input_high.size(), m, "dynamics_data.input_high");
    require_dim(cfg.dyn_data.state_low.size(), n, "dynamics_data.state_low");
    require_dim(cfg.dyn_data.state_high.size(), n, "dynamics_data.state_high");
    require_dim(cfg.expert.state_low.size(), n, "expert.state_low");
    require_dim(cfg.expert.state_high.size(), n, "expert.state_high");
    require_dim(cfg.environment.domain_low.size(), n, "environment.domain_low");
    require_dim(cfg.environment.goal.size(), n, "environment.goal");
    require_dim(cfg.slice.input.size(), m, "slice.input");
    require_dim(cfg.slice.state.size(), n, "slice.state");
    if (cfg.simulate.adversarial_start.size()) require_dim(cfg.simulate.adversarial_start.size(), n, "simulate.adversarial_start");
  }
  cfg.bench.nmpc = cfg.nmpc;
  cfg.bench.loop = cfg.controller;
  resolve_obstacles(cfg);
  cfg.environment.validate();
  return cfg;
}

Config load(const std::string& path) {
  try {
    return parse(csv::read_file(path));
  } catch (const ShapeError& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void resolve_obstacles(Config& cfg) {
  if (!cfg.random_obstacles) return;
  const RandomObstacles& ro = *cfg.random_obstacles;
  const auto k = static_cast<Eigen::Index>(cfg.environment.position_indices.size());
  require_dim(ro.center_low.size(), k, "random_obstacles.center_low");
  require_dim(ro.center_high.size(), k, "random_obstacles.center_high");
  Rng rng(derive_seed(cfg.seed, 100));
  cfg.environment.obstacles.clear();
  for (int i = 0; i < ro.count; ++i) {
    icbf::Obstacle ob;
    ob.center = rng.uniform(ro.center_low, ro.center_high);
    ob.radius = rng.uniform(ro.radius_low, ro.radius_high);
    cfg.environment.obstacles.push_back(ob);
  }
}

std::string canonical_json(const Config& cfg) {
  json j;
  j["system"]["name"] = cfg.system;
  for (const auto& [k, v] : cfg.system_params) j["system"]["params"][k] = v;
  j["seed"] = cfg.seed;
  const auto& d = cfg.dyn_data;
  j["dynamics_data"] = {{"n_traj", d.n_traj},         {"horizon", d.horizon},
                        {"dt", d.dt},                 {"input_low", vec_json(d.input_low)},
                        {"input_high", vec_json(d.input_high)}, {"state_low", vec_json(d.state_low)},
                        {"state_high", vec_json(d.state_high)}, {"max_resamples", d.max_resamples}};
  const auto& t = cfg.dynamics;
  j["sysid"] = network_json(t.hidden, t.activation, t.epochs, t.batch_size, t.learning_rate, t.validation_fraction);
  j["sysid"]["rollout_error_threshold"] = cfg.rollout_error_threshold;
  const auto& c = cfg.nmpc;
  j["nmpc"] = {{"horizon_steps", c.horizon_steps},     {"dt", c.dt},
               {"Q_diag", vec_json(c.Q.diagonal())},   {"R_diag", vec_json(c.R.diagonal())},
               {"max_iters", c.max_iters},             {"grad_tol", c.grad_tol},
               {"learning_rate", c.learning_rate},     {"lr_decay", c.lr_decay},
               {"min_learning_rate", c.min_learning_rate}};
  j["expert"] = {{"n_starts", cfg.expert.n_starts},
                 {"receding_steps", cfg.expert.receding_steps},
                 {"state_low", vec_json(cfg.expert.state_low)},
                 {"state_high", vec_json(cfg.expert.state_high)}};
  const auto& p = cfg.policy;
  j["imitation"] = network_json(p.hidden, p.activation, p.epochs, p.batch_size, p.learning_rate, p.validation_fraction);
  const auto& env = cfg.environment;
  json obstacles = json::array();
  for (const auto& ob : env.obstacles) obstacles.push_back({{"center", vec_json(ob.center)}, {"radius", ob.radius}});
  j["environment"] = {{"domain_low", vec_json(env.domain_low)},
                      {"domain_high", vec_json(env.domain_high)},
                      {"goal", vec_json(env.goal)},
                      {"position_indices", env.position_indices},
                      {"obstacles", obstacles}};
  j["environment"]["input_ball_radius"] =
      std::isfinite(env.input_ball_radius) ? json(env.input_ball_radius) : json("inf");
  const auto& b = cfg.barrier;
  j["icbf"] = network_json(b.hidden, b.activation, b.epochs, b.batch_size, b.learning_rate, b.validation_fraction);
  j["icbf"]["n_samples"] = cfg.n_samples;
  j["icbf"]["epsilon"] = cfg.epsilon_auto ? json("auto") : json(b.loss.epsilon);
  j["icbf"]["flip_epsilon_sign"] = b.loss.flip_epsilon_sign;
  j["icbf"]["gamma_gain"] = b.loss.gamma.gain;
  j["icbf"]["tracking_gain"] = cfg.tracking();
  j["icbf"]["p_tol"] = b.loss.p_tol;
  const auto& ctl = cfg.controller;
  j["controller"] = {{"dt", ctl.dt},
                     {"substeps", ctl.substeps},
                     {"goal_tolerance", ctl.goal_tolerance},
                     {"max_steps", ctl.max_steps},
                     {"project_inputs", ctl.project_inputs},
                     {"input_slack", ctl.input_slack}};
  const auto& sim = cfg.simulate;
  j["simulate"] = {{"n_starts", sim.n_starts},
                   {"plant", sim.learned_plant ? "learned" : "true"},
                   {"start_low", vec_json(sim.start_low)},
                   {"start_high", vec_json(sim.start_high)},
                   {"min_start_clearance", sim.min_start_clearance},
                   {"adversarial_start", vec_json(sim.adversarial_start)}};
  const auto& cc = cfg.certify;
  j["certify"] = {{"n_states", cc.n_states},
                  {"lipschitz_pairs", cc.lipschitz_pairs},
                  {"smoothing_rho", cc.smoothing_rho},
                  {"state_low", vec_json(cc.state_low)},
                  {"state_high", vec_json(cc.state_high)},
                  {"min_state_clearance", cc.min_state_clearance}};
  std::vector<std::string> methods;
  for (auto mth : cfg.bench.methods) methods.push_back(bench::to_string(mth));
  j["bench"] = {{"n_avg", cfg.bench.n_avg},
                {"start_low", vec_json(cfg.bench.start_low)},
                {"start_high", vec_json(cfg.bench.start_high)},
                {"min_start_clearance", cfg.bench.min_start_clearance},
                {"penalty_weight", cfg.bench.penalty_weight},
                {"methods", methods}};
  j["slice"] = {{"resolution", cfg.slice.resolution},
                {"input", vec_json(cfg.slice.input)},
                {"state", vec_json(cfg.slice.state)}};
  return j.dump(1) + "\n";
}

std::string hash(const Config& cfg) { return csv::hex(csv::fnv1a(canonical_json(cfg))); }

}  // namespace nicbf::config
