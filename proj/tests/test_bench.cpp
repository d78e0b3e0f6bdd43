#include <doctest.h>

#include <filesystem>

#include "nicbf/bench.hpp"

using namespace nicbf;
using namespace nicbf::bench;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

dynamics::Trajectory traj(std::vector<Vec> xs, std::vector<Vec> us) {
  dynamics::Trajectory t;
  t.dt = 0.1;
  t.states = std::move(xs);
  t.inputs = std::move(us);
  return t;
}

icbf::EnvironmentSpec arena() {
  icbf::EnvironmentSpec env;
  env.domain_low = Vec::Zero(2);
  env.domain_high = Vec::Ones(2);
  env.obstacles = {{v2(0.5, 0.5), 0.1}};
  env.input_ball_radius = 0.5;
  env.goal = Vec::Zero(2);
  return env;
}

/// Filter that is never active, wrapped around a go-to-origin policy.
class AlwaysSafe final : public icbf::Barrier {
 public:
  icbf::BarrierEval evaluate(const Vec& x, const Vec& u) const override {
    return {1.0, Vec::Zero(x.size()), Vec::Zero(u.size())};
  }
};

safectl::SafeController homing() {
  safectl::SafeController c;
  c.barrier = std::make_shared<AlwaysSafe>();
  c.field = dynamics::vehicle_field;
  c.policy = [](const Vec& x) { return v2(std::min(0.5, x.norm()), std::atan2(-x(1), -x(0))); };
  c.tracking_gain = 1.0;
  return c;
}

BenchConfig small_bench(int n_avg) {
  BenchConfig cfg;
  cfg.n_avg = n_avg;
  cfg.seed = 5;
  cfg.nmpc = expert::default_nmpc(2, 2);
  cfg.nmpc.max_iters = 50;
  cfg.loop.goal_tolerance = 0.1;
  cfg.loop.max_steps = 15;
  return cfg;
}

}  // namespace

TEST_CASE("trajectory cost") {
  const Mat I = Mat::Identity(2, 2);
  SUBCASE("zero trajectory") {
    CHECK(trajectory_cost(traj({v2(0, 0), v2(0, 0), v2(0, 0)}, {v2(0, 0), v2(0, 0)}), I, I) == 0.0);
  }
  SUBCASE("hand value skips the initial state") {
    CHECK(trajectory_cost(traj({v2(9, 9), v2(1, 0)}, {v2(0, 2)}), I, I) == 5.0);
  }
  SUBCASE("scaling Q scales only the state part") {
    const auto t = traj({v2(0, 0), v2(1, 2), v2(0.5, -1)}, {v2(0.3, 0.1), v2(-0.2, 0.4)});
    const double state = 5.0 + 1.25;
    const double input = 0.1 + 0.2;
    CHECK(trajectory_cost(t, I, I) == doctest::Approx(state + input));
    CHECK(trajectory_cost(t, 3.0 * I, I) == doctest::Approx(3.0 * state + input));
  }
  SUBCASE("additive over concatenation") {
    const auto a = traj({v2(1, 1), v2(0.5, 0.2), v2(0.1, 0.3)}, {v2(0.1, 0.2), v2(0.4, 0.4)});
    const auto b = traj({v2(0.1, 0.3), v2(0.0, 0.1)}, {v2(0.3, -0.1)});
    const auto ab = traj({v2(1, 1), v2(0.5, 0.2), v2(0.1, 0.3), v2(0.0, 0.1)},
                         {v2(0.1, 0.2), v2(0.4, 0.4), v2(0.3, -0.1)});
    CHECK(trajectory_cost(ab, I, I) == doctest::Approx(trajectory_cost(a, I, I) + trajectory_cost(b, I, I)));
  }
}

TEST_CASE("method names round-trip") {
  for (Method m : {Method::nmpc, Method::proposed, Method::nominal_unfiltered})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("lqr"), ConfigError);
}

TEST_CASE("obstacle penalty vanishes outside obstacles and within the input ball") {
  const auto pen = obstacle_penalty(arena(), 1e3);
  Vec gx = Vec::Zero(2), gu = Vec::Zero(2);
  CHECK(pen(v2(0.9, 0.9), v2(0.3, 0.3), gx, gu) == 0.0);
  CHECK(gx.isZero(0.0));
  CHECK(pen(v2(0.55, 0.5), v2(0.0, 0.0), gx, gu) == doctest::Approx(1e3 * 0.05 * 0.05));
  CHECK(gx(0) < 0.0);
}

TEST_CASE("starting at the goal costs nothing and succeeds for every method") {
  BenchConfig cfg = small_bench(1);
  cfg.start_low = cfg.start_high = Vec::Zero(2);
  const BenchmarkResult r = run_benchmark(arena(), dynamics::vehicle_system(), homing(), cfg);
  REQUIRE(r.rows.size() == 3);
  for (const auto& row : r.rows) {
    CHECK(row.mean_cost == 0.0);
    CHECK(row.success_rate == 1.0);
    CHECK(row.violations == 0);
    CHECK(row.failures == 0);
  }
}

TEST_CASE("start states avoid obstacles and are seeded") {
  BenchConfig cfg = small_bench(50);
  const Mat a = sample_starts(arena(), cfg);
  CHECK(a == sample_starts(arena(), cfg));
  for (Eigen::Index c = 0; c < a.cols(); ++c) CHECK(arena().clearance(a.col(c)) >= cfg.min_start_clearance);
  cfg.start_low = cfg.start_high = v2(0.5, 0.5);
  CHECK_THROWS_AS(sample_starts(arena(), cfg), ConfigError);
}

TEST_CASE("benchmark costs are deterministic") {
  const BenchConfig cfg = small_bench(2);
  const BenchmarkResult a = run_benchmark(arena(), dynamics::vehicle_system(), homing(), cfg);
  const BenchmarkResult b = run_benchmark(arena(), dynamics::vehicle_system(), homing(), cfg);
  REQUIRE(a.episodes.size() == 6);
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    CHECK(a.episodes[i].cost == b.episodes[i].cost);
    CHECK(a.episodes[i].steps == b.episodes[i].steps);
  }
  // With an inactive filter the proposed and unfiltered runs coincide.
  CHECK(a.rows[1].mean_cost == a.rows[2].mean_cost);
}

TEST_CASE("summaries exclude failed episodes") {
  std::vector<Episode> eps(3);
  eps[0].cost = 2.0;
  eps[0].reached = true;
  eps[1].cost = 4.0;
  eps[1].penetrated = true;
  eps[2].failed = true;
  eps[2].cost = 1e9;
  const auto rows = summarize(eps, {Method::proposed});
  CHECK(rows[0].mean_cost == 3.0);
  CHECK(rows[0].success_rate == 0.5);
  CHECK(rows[0].violations == 1);
  CHECK(rows[0].failures == 1);
}

TEST_CASE("tables") {
  CHECK(table_csv({}) == "method,mean_cost,mean_time_s,success_rate,violations\n");
  CHECK(parse_table_csv(table_csv({})).empty());
  Row r{"proposed", 1.0 / 3.0, 2.5e-4, 0.75, 2, 0};
  const auto back = parse_table_csv(table_csv({r}));
  REQUIRE(back.size() == 1);
  CHECK(back[0].method == "proposed");
  CHECK(back[0].mean_cost == r.mean_cost);
  CHECK(back[0].mean_time_s == r.mean_time_s);
  CHECK(back[0].violations == 2);
  CHECK_THROWS_AS(parse_table_csv("a,b\n"), IoError);
  CHECK(human_table({r}, "vehicle").find("proposed") != std::string::npos);
}

TEST_CASE("report files are exported") {
  BenchConfig cfg = small_bench(1);
  cfg.start_low = cfg.start_high = Vec::Zero(2);
  const auto dir = std::filesystem::temp_directory_path() / "nicbf_test_bench";
  std::filesystem::remove_all(dir);
  export_report(run_benchmark(arena(), dynamics::vehicle_system(), homing(), cfg), dir.string(), "vehicle");
  for (const char* f : {"table.csv", "episodes.csv", "table.txt"}) CHECK(std::filesystem::exists(dir / f));
  std::filesystem::remove_all(dir);
}
