#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nicbf/bench.hpp"
#include "nicbf/common.hpp"
#include "nicbf/expert.hpp"
#include "nicbf/icbf.hpp"
#include "nicbf/imitation.hpp"
#include "nicbf/safectl.hpp"
#include "nicbf/sysid.hpp"

/// Experiment configuration: one JSON object with a section per module.
/// Unknown keys anywhere are rejected; omitted keys keep their defaults.
namespace nicbf::config {

struct RandomObstacles {
  int count = 0;
  double radius_low = 0.1;
  double radius_high = 0.2;
  Vec center_low;  // position coordinates
  Vec center_high;
};

struct SimulateConfig {
  int n_starts = 100;
  bool learned_plant = false;   // integrate F_theta instead of the true dynamics
  Vec start_low;                // defaults to the environment domain
  Vec start_high;
  double min_start_clearance = 0.05;
  Vec adversarial_start;        // start whose unfiltered path crosses an obstacle
};

struct CertifyConfig {
  int n_states = 200;
  int lipschitz_pairs = 20000;
  double smoothing_rho = 0.01;
  Vec state_low;                // test-state box; defaults to the environment domain
  Vec state_high;
  double min_state_clearance = 0.0;
};

struct SliceConfig {
  int resolution = 101;
  Vec input;   // input held fixed on the state-plane slice
  Vec state;   // state held fixed on the input-plane slice
};

struct Config {
  std::string system = "vehicle";
  std::map<std::string, double> system_params;
  std::uint64_t seed = 0;

  sysid::GenerationConfig dyn_data;
  sysid::TrainConfig dynamics;
  double rollout_error_threshold = 0.1;  // per-step state error of the open-loop check

  expert::NmpcConfig nmpc;
  expert::ExpertConfig expert;
  imitation::TrainConfig policy;

  icbf::EnvironmentSpec environment;
  std::optional<RandomObstacles> random_obstacles;
  int n_samples = 10000;
  icbf::TrainConfig barrier;
  bool epsilon_auto = false;           // epsilon from the model-only part of the bound
  std::optional<double> tracking_gain; // defaults to 1 / controller dt

  safectl::ClosedLoopConfig controller;
  SimulateConfig simulate;
  CertifyConfig certify;
  bench::BenchConfig bench;
  SliceConfig slice;

  /// Gain of the integral tracking law.
  double tracking() const { return tracking_gain ? *tracking_gain : 1.0 / controller.dt; }
};

/// Defaults for the named system with no file at all.
Config defaults(const std::string& system);

/// Parses a config document; throws ConfigError naming the offending key.
Config parse(const std::string& json_text);
Config load(const std::string& path);

/// Canonical JSON of every resolved field (obstacles included).
std::string canonical_json(const Config& cfg);
/// FNV-1a of canonical_json.
std::string hash(const Config& cfg);

/// Draws the random obstacles (if configured) from the seed and stores them
/// in environment.obstacles.
void resolve_obstacles(Config& cfg);

}  // namespace nicbf::config
