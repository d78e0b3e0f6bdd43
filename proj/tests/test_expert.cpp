#include <doctest.h>

#include <filesystem>

#include "nicbf/expert.hpp"
#include "nicbf/imitation.hpp"
#include "nicbf/random.hpp"
#include "oracles.hpp"

using namespace nicbf;
using namespace nicbf::expert;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

ExpertConfig small_expert(int starts, int steps, std::uint64_t seed) {
  ExpertConfig e;
  e.n_starts = starts;
  e.receding_steps = steps;
  e.state_low = Vec::Zero(2);
  e.state_high = Vec::Ones(2);
  e.seed = seed;
  return e;
}

}  // namespace

TEST_CASE("starting at the origin needs no input") {
  const NmpcSolution s = solve_nmpc(dynamics::vehicle_system(), Vec::Zero(2), default_nmpc(2, 2));
  for (const auto& u : s.inputs) CHECK(u.isZero(0.0));
  CHECK(s.cost == 0.0);
}

TEST_CASE("the solver never returns worse than its initialization") {
  const auto spec = dynamics::vehicle_system();
  const NmpcConfig cfg = default_nmpc(2, 2);
  const NmpcSolution s = solve_nmpc(spec, v2(1, 0), cfg);
  const double zero = shooting_cost(spec, v2(1, 0), std::vector<Vec>(20, Vec::Zero(2)), cfg, nullptr, nullptr);
  CHECK(s.cost <= zero);
  CHECK(s.cost == shooting_cost(spec, v2(1, 0), s.inputs, cfg, nullptr, nullptr));
  CHECK(s.inputs.size() == 20);
}

TEST_CASE("penalty gradient matches central differences") {
  const auto spec = dynamics::vehicle_system();
  NmpcConfig cfg = default_nmpc(2, 2);
  cfg.horizon_steps = 5;
  // Soft disc penalty on the next state and a norm-excess penalty on u.
  const StagePenalty pen = [](const Vec& x, const Vec& u, Vec& gx, Vec& gu) {
    const Vec d = x - v2(0.5, 0.5);
    const double r = d.norm(), p = 0.3 - r;
    double c = 0.0;
    if (p > 0) {
      c += 10 * p * p;
      gx += -20 * p * d / r;
    }
    const double e = u.norm() - 0.5;
    if (e > 0) {
      c += 10 * e * e;
      gu += 20 * e * u / u.norm();
    }
    return c;
  };
  std::vector<Vec> u{v2(0.8, 0.3), v2(0.6, 0.9), v2(0.2, -0.4), v2(0.7, 0.1), v2(0.3, 0.2)};
  std::vector<Vec> g;
  shooting_cost(spec, v2(0.3, 0.35), u, cfg, &pen, &g);
  Vec flat(10), packed(10);
  for (int k = 0; k < 5; ++k) {
    flat.segment(2 * k, 2) = g[static_cast<std::size_t>(k)];
    packed.segment(2 * k, 2) = u[static_cast<std::size_t>(k)];
  }
  const Vec fd = oracle::fd_gradient(
      [&](const Vec& w) {
        std::vector<Vec> us;
        for (int k = 0; k < 5; ++k) us.push_back(w.segment(2 * k, 2));
        return shooting_cost(spec, v2(0.3, 0.35), us, cfg, &pen, nullptr);
      },
      packed);
  CHECK(oracle::rel_error(flat, fd) < 1e-6);
}

TEST_CASE("invalid weights are rejected") {
  NmpcConfig cfg = default_nmpc(2, 2);
  cfg.R = Mat::Zero(2, 2);
  CHECK_THROWS_AS(cfg.validate(2, 2), ConfigError);
  cfg = default_nmpc(2, 2);
  cfg.Q = -Mat::Identity(2, 2);
  CHECK_THROWS_AS(cfg.validate(2, 2), ConfigError);
  CHECK_THROWS_AS(default_nmpc(2, 2).validate(3, 2), Error);
}

TEST_CASE("warm start shifts by one step") {
  const auto s = shift_warm_start({v2(1, 1), v2(2, 2), v2(3, 3)});
  REQUIRE(s.size() == 3);
  CHECK(s[0] == v2(2, 2));
  CHECK(s[2].isZero(0.0));
}

TEST_CASE("one start and one receding step record one pair") {
  const ExpertDataset d = gen_expert_dataset(dynamics::vehicle_system(), small_expert(1, 1, 3), default_nmpc(2, 2));
  CHECK(d.size() == 1);
  CHECK(d.n_starts == 1);
}

TEST_CASE("expert dataset is deterministic and its first pairs re-solve exactly") {
  const auto spec = dynamics::vehicle_system();
  const NmpcConfig cfg = default_nmpc(2, 2);
  const ExpertDataset a = gen_expert_dataset(spec, small_expert(2, 3, 4), cfg);
  const ExpertDataset b = gen_expert_dataset(spec, small_expert(2, 3, 4), cfg);
  CHECK(a.states == b.states);
  CHECK(a.inputs == b.inputs);
  REQUIRE(a.size() == 6);
  // Later pairs come from warm-started solves and agree within solver tolerance.
  for (Eigen::Index c = 0; c < a.size(); ++c) {
    const NmpcSolution s = solve_nmpc(spec, a.states.col(c), cfg);
    const double tol = (c % 3 == 0) ? 0.0 : 5e-2;
    CHECK((s.inputs.front() - a.inputs.col(c)).norm() <= tol);
  }
}

TEST_CASE("receding-horizon NMPC brings the vehicle near the origin") {
  const auto spec = dynamics::vehicle_system();
  const NmpcConfig cfg = default_nmpc(2, 2);
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    Vec x = rng.uniform(Vec::Zero(2), Vec::Ones(2));
    std::vector<Vec> warm;
    for (int k = 0; k < 60; ++k) {
      const NmpcSolution s = solve_nmpc(spec, x, cfg, warm.empty() ? nullptr : &warm);
      x = dynamics::rk4_step(spec, x, s.inputs.front(), cfg.dt);
      warm = shift_warm_start(s.inputs);
    }
    CHECK(x.norm() < 0.1);
  }
}

TEST_CASE("expert dataset CSV round-trips") {
  const ExpertDataset d = gen_expert_dataset(dynamics::vehicle_system(), small_expert(1, 2, 9), default_nmpc(2, 2));
  const auto path = std::filesystem::temp_directory_path() / "nicbf_test_expert.csv";
  save_dataset(d, path.string());
  const ExpertDataset back = load_dataset(path.string(), 2);
  CHECK(back.states == d.states);
  CHECK(back.inputs == d.inputs);
  std::filesystem::remove(path);
}

TEST_CASE("imitation loss values") {
  nn::Mlp lin({2, 2}, nn::Activation::identity);
  lin.weight(0) << 1, 2, 3, 4;
  lin.bias(0) << 0.5, -0.5;
  const Mat x = (Mat(2, 1) << 1, -1).finished();
  SUBCASE("exact labels") { CHECK(imitation::loss_imitation(lin, x, lin.forward(x)) == 0.0); }
  SUBCASE("hand value") {
    // prediction (-0.5, -1.5) vs label (0, 0)
    CHECK(imitation::loss_imitation(lin, x, Mat::Zero(2, 1)) == doctest::Approx(0.25 + 2.25));
  }
  SUBCASE("non-negative") {
    for (int k = 0; k < 5; ++k) CHECK(imitation::loss_imitation(lin, Mat::Random(2, 3), Mat::Random(2, 3)) >= 0.0);
  }
}

TEST_CASE("behavior cloning recovers a teacher network") {
  nn::Mlp teacher = nn::Mlp::glorot({2, 4, 2}, nn::Activation::tanh, 31);
  teacher.weight(0) *= 0.5;
  Rng rng(6);
  ExpertDataset d;
  d.states.resize(2, 800);
  d.inputs.resize(2, 800);
  for (Eigen::Index c = 0; c < 800; ++c) {
    d.states.col(c) = rng.uniform(Vec::Zero(2), Vec::Ones(2));
    d.inputs.col(c) = teacher(d.states.col(c));
  }
  imitation::TrainConfig cfg;
  cfg.hidden = {4};
  cfg.activation = nn::Activation::tanh;
  cfg.epochs = 1200;
  cfg.batch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.seed = 2;
  const auto r = imitation::train_policy(d, cfg);
  CHECK(r.validation_rms < 1e-3);
  CHECK(r.best_validation_loss <= r.initial_validation_loss);

  cfg.epochs = 3;
  CHECK(imitation::train_policy(d, cfg).policy.parameters() == imitation::train_policy(d, cfg).policy.parameters());
}
