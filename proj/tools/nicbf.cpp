// Command-line driver for the learning, control and evaluation stages.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nicbf/config.hpp"
#include "nicbf/pipeline.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string system = "vehicle";
  long long seed = -1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--system", opts.system, "System for built-in defaults when no config is given")
      ->check(CLI::IsMember({"vehicle", "quadrotor"}));
  cmd->add_option("--seed", opts.seed, "Override the config seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", opts.out, "Output directory (default: $NICBF_OUT or ./nicbf_out)");
}

nicbf::config::Config resolve_config(const CommonOptions& opts) {
  nicbf::config::Config cfg =
      opts.config_path.empty() ? nicbf::config::parse("{\"system\": {\"name\": \"" + opts.system + "\"}}")
                               : nicbf::config::load(opts.config_path);
  if (opts.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(opts.seed);
    nicbf::config::resolve_obstacles(cfg);
  }
  return cfg;
}

std::string resolve_out(const CommonOptions& opts) {
  if (!opts.out.empty()) return opts.out;
  if (const char* env = std::getenv("NICBF_OUT"); env && *env) return env;
  return "nicbf_out";
}

void print_stage(const nicbf::pipeline::StageResult& r) {
  std::cout << "[" << r.stage << "] done in " << r.seconds << " s: " << r.summary.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural integral control barrier functions: learn dynamics, clone an NMPC expert, "
               "train a joint state-input barrier and run the safe controller."};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"gen-dyn-data", "Simulate random-input trajectories of the true system"},
      {"train-dynamics", "Fit the neural vector field on the trajectory data"},
      {"gen-expert", "Record receding-horizon NMPC state-input pairs"},
      {"train-policy", "Behavior-clone the NMPC expert"},
      {"sample-icbf", "Sample and label the joint state-input space"},
      {"train-icbf", "Train the neural integral barrier and export 2-D slices"},
      {"simulate", "Closed-loop runs of the filtered controller"},
      {"certify", "Estimate the error-bound components and validate the bound"},
      {"bench", "Compare NMPC, the filtered controller and the unfiltered policy"},
      {"pipeline", "Run every stage in order"},
  };
  CommonOptions opts;
  for (const auto& s : subs) add_common(app.add_subcommand(s.name, s.help), opts);

  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();

  try {
    const nicbf::config::Config cfg = resolve_config(opts);
    const std::string out = resolve_out(opts);
    if (name == "pipeline") {
      nicbf::pipeline::run_pipeline(cfg, out, print_stage);
    } else {
      print_stage(nicbf::pipeline::run_stage(name, cfg, out));
    }
  } catch (const nicbf::pipeline::StageError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: [" << name << "] " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
