#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nicbf/certify.hpp"
#include "nicbf/config.hpp"

/// Stage-by-stage orchestration of the full workflow with on-disk artifacts.
///
/// Layout under the output directory:
///   config.json                  resolved configuration
///   dyn_data/                    trajectory CSVs + manifest.json
///   expert/dataset.csv           expert (x, u*) pairs
///   icbf/samples.csv             labeled joint-space samples
///   icbf/slice_state.csv, icbf/slice_input.csv
///   models/{dynamics,policy,barrier}.json
///   sysid/rollout_check.csv      open-loop prediction vs truth
///   simulate/                    per-run trajectories and metrics
///   certify/report.json, certify/validation.csv
///   bench/table.csv, bench/episodes.csv, bench/table.txt
///   manifests/<stage>.json       seed, config hash, checksums, summary
///   manifests/<stage>.timing.json
namespace nicbf::pipeline {

const std::vector<std::string>& stage_names();

/// Failure of one stage; the message is prefixed with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageResult {
  std::string stage;
  nlohmann::json summary;  // deterministic fields only
  double seconds = 0.0;    // wall time
};

StageResult run_stage(const std::string& stage, const config::Config& cfg, const std::string& out_dir);

/// Every stage in order; stops at the first failure (artifacts of completed
/// stages stay on disk).
std::vector<StageResult> run_pipeline(const config::Config& cfg, const std::string& out_dir,
                                      const std::function<void(const StageResult&)>& on_stage = {});

/// Fraction of grid points on a 2-D slice whose sign of h matches the label.
struct SliceCheck {
  double state_agreement = 0.0;
  double input_agreement = 0.0;
};

/// h over the plane of the first two position coordinates (input fixed) and
/// over the plane of the first two input coordinates (state fixed), written as
/// CSV `a,b,h,label`.
SliceCheck export_slices(const nn::Mlp& barrier, const config::Config& cfg, const std::string& dir);

/// Components of the bound that do not involve the barrier, measured on the
/// given test states.
certify::BoundComponents model_components(const config::Config& cfg, const std::string& out_dir,
                                          const Mat& test_states);

/// Seeded test states for bound validation.
Mat certify_states(const config::Config& cfg);

}  // namespace nicbf::pipeline
