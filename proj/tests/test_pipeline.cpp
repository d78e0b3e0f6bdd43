#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "checks.hpp"
#include "nicbf/csv.hpp"
#include "nicbf/pipeline.hpp"

using namespace nicbf;
namespace fs = std::filesystem;

namespace {

const std::string kSmoke = std::string(NICBF_SOURCE_DIR) + "/configs/smoke.json";

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("two smoke runs with the same seed produce identical artifacts") {
  const config::Config cfg = config::load(kSmoke);
  const fs::path a = fresh_dir("nicbf_test_smoke_a"), b = fresh_dir("nicbf_test_smoke_b");
  const auto ra = pipeline::run_pipeline(cfg, a.string());
  const auto rb = pipeline::run_pipeline(cfg, b.string());
  REQUIRE(ra.size() == pipeline::stage_names().size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CAPTURE(ra[i].stage);
    CHECK(ra[i].summary == rb[i].summary);
  }
  const checks::RunComparison cmp = checks::compare_runs(a.string(), b.string());
  CHECK(cmp.files_compared > 15);
  CHECK(cmp.mismatches.empty());
  for (const char* f : {"models/dynamics.json", "models/policy.json", "models/barrier.json", "bench/table.csv"})
    CHECK(fs::exists(a / f));

  // Manifests record the config hash and artifact checksums.
  {
    for (const auto& stage : pipeline::stage_names()) {
      CAPTURE(stage);
      const auto m = nlohmann::json::parse(csv::read_file((a / "manifests" / (stage + ".json")).string()));
      CHECK(m.at("stage") == stage);
      CHECK(m.at("config_hash") == config::hash(cfg));
      for (const auto& [rel, sum] : m.at("artifacts").items())
        CHECK(sum == csv::hex(csv::fnv1a(csv::read_file((a / rel).string()))));
      CHECK(fs::exists(a / "manifests" / (stage + ".timing.json")));
    }
  }
  // A different seed changes the data.
  {
    config::Config other = cfg;
    other.seed = cfg.seed + 1;
    const fs::path c = fresh_dir("nicbf_test_smoke_c");
    pipeline::run_stage("gen-dyn-data", other, c.string());
    CHECK(csv::read_file((c / "dyn_data" / "traj_00000.csv").string()) !=
          csv::read_file((a / "dyn_data" / "traj_00000.csv").string()));
    fs::remove_all(c);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("a stage without its inputs fails naming the stage and the missing path") {
  const config::Config cfg = config::load(kSmoke);
  const fs::path d = fresh_dir("nicbf_test_missing");
  for (const char* stage : {"train-dynamics", "train-policy", "train-icbf", "simulate", "certify", "bench"}) {
    CAPTURE(stage);
    try {
      pipeline::run_stage(stage, cfg, d.string());
      FAIL("expected a stage error");
    } catch (const pipeline::StageError& e) {
      CHECK(e.stage() == stage);
      CHECK(std::string(e.what()).find(d.string()) != std::string::npos);
    }
  }
  CHECK_THROWS_AS(pipeline::run_stage("no-such-stage", cfg, d.string()), pipeline::StageError);
  fs::remove_all(d);
}
