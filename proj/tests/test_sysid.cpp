#include <doctest.h>

#include <filesystem>

#include "nicbf/random.hpp"
#include "nicbf/sysid.hpp"

using namespace nicbf;
using namespace nicbf::sysid;

namespace {

GenerationConfig vehicle_gen(int n_traj, std::uint64_t seed = 1) {
  GenerationConfig g = default_generation(2, 2);
  g.n_traj = n_traj;
  g.seed = seed;
  return g;
}

nn::Mlp small_net(std::uint64_t seed) {
  nn::Mlp net = nn::Mlp::glorot({3, 6, 2}, nn::Activation::tanh, seed);
  return net;
}

}  // namespace

TEST_CASE("no trajectories requested gives an empty dataset") {
  const DynDataset d = gen_dynamics_data(dynamics::vehicle_system(), vehicle_gen(0));
  CHECK(d.trajectories.empty());
  CHECK(d.num_transitions() == 0);
}

TEST_CASE("ten second vehicle trajectories sampled at 0.1 s") {
  const DynDataset d = gen_dynamics_data(dynamics::vehicle_system(), vehicle_gen(3));
  REQUIRE(d.trajectories.size() == 3);
  for (const auto& t : d.trajectories) {
    CHECK(t.states.size() == 101);
    CHECK(t.inputs.size() == 100);
    for (const auto& u : t.inputs) CHECK((u.array() >= 0.0).all());
    for (const auto& u : t.inputs) CHECK((u.array() <= 1.0).all());
  }
  CHECK((d.trajectories[0].states[0].array() >= 0.0).all());
  CHECK(d.num_transitions() == 300);
}

TEST_CASE("seeded generation is bit-identical") {
  const DynDataset a = gen_dynamics_data(dynamics::vehicle_system(), vehicle_gen(2, 5));
  const DynDataset b = gen_dynamics_data(dynamics::vehicle_system(), vehicle_gen(2, 5));
  const DynDataset c = gen_dynamics_data(dynamics::vehicle_system(), vehicle_gen(2, 6));
  CHECK(transitions(a).next == transitions(b).next);
  CHECK(transitions(a).next != transitions(c).next);
}

TEST_CASE("data generated by the model itself has zero loss") {
  const nn::Mlp net = small_net(3);
  const dynamics::SystemSpec learned = as_system(net, 2, 1);
  DynDataset d;
  d.dt = 0.1;
  Rng rng(2);
  for (int k = 0; k < 3; ++k) {
    std::vector<Vec> us;
    for (int i = 0; i < 8; ++i) us.push_back(rng.uniform(Vec::Zero(1), Vec::Ones(1)));
    d.trajectories.push_back(dynamics::rollout(learned, rng.uniform(Vec::Zero(2), Vec::Ones(2)), us, 0.1));
  }
  CHECK(loss_dynamics(net, d) <= 1e-12);
}

TEST_CASE("single transition loss by hand") {
  // F(x, u) = a x + c u + b in one dimension.
  nn::Mlp net({2, 1}, nn::Activation::identity);
  const double a = -0.5, c = 2.0, b = 0.1;
  net.weight(0) << a, c;
  net.bias(0) << b;
  Transitions tr;
  tr.states = Mat::Constant(1, 1, 1.0);
  tr.inputs = Mat::Constant(1, 1, 0.3);
  tr.next = Mat::Constant(1, 1, 1.2);
  const double h = 0.1, x = 1.0, d = c * 0.3 + b;
  const double k1 = a * x + d;
  const double k2 = a * (x + h / 2 * k1) + d;
  const double k3 = a * (x + h / 2 * k2) + d;
  const double k4 = a * (x + h * k3) + d;
  const double pred = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  CHECK(loss_dynamics(net, tr, h, nullptr) == doctest::Approx((pred - 1.2) * (pred - 1.2)).epsilon(1e-14));
}

TEST_CASE("loss is non-negative") {
  Rng rng(4);
  for (int k = 0; k < 5; ++k) {
    Transitions tr;
    tr.states = Mat::Random(2, 4);
    tr.inputs = Mat::Random(1, 4);
    tr.next = Mat::Random(2, 4);
    CHECK(loss_dynamics(small_net(static_cast<std::uint64_t>(k)), tr, 0.1, nullptr) >= 0.0);
  }
}

TEST_CASE("zero-parameter net predicts a constant state") {
  const nn::Mlp net({4, 8, 2}, nn::Activation::tanh);
  const Vec x0 = (Vec(2) << 0.3, 0.9).finished();
  const auto xs = predict_rollout(net, x0, std::vector<Vec>(5, Vec::Ones(2)), 0.1);
  REQUIRE(xs.size() == 6);
  for (const auto& x : xs) CHECK(x == x0);
}

TEST_CASE("prediction agrees with the dynamics module on the net's field") {
  const nn::Mlp net = nn::Mlp::glorot({4, 8, 2}, nn::Activation::tanh, 12);
  const Vec x0 = (Vec(2) << 0.3, 0.9).finished();
  std::vector<Vec> us{Vec::Ones(2), Vec::Zero(2), Vec::Constant(2, 0.4)};
  const auto xs = predict_rollout(net, x0, us, 0.1);
  const auto ref = dynamics::rollout(as_system(net, 2, 2), x0, us, 0.1);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(xs[i] == ref.states[i]);
  CHECK(predict_step(net, x0, us[0], 0.1) == xs[1]);
  const Mat batch = predict_step(net, Mat(x0.replicate(1, 2)), Mat(us[0].replicate(1, 2)), 0.1);
  CHECK(Vec(batch.col(1)) == xs[1]);
}

TEST_CASE("training recovers a linear system") {
  Mat A(2, 2), B(2, 1);
  A << 0.0, 1.0, -1.0, -0.2;
  B << 0.0, 1.0;
  const auto spec = dynamics::linear_system(A, B);
  GenerationConfig g = default_generation(2, 1);
  g.n_traj = 40;
  g.horizon = 2.0;
  g.input_low = Vec::Constant(1, -1.0);
  g.input_high = Vec::Ones(1);
  g.state_low = Vec::Constant(2, -1.0);
  g.state_high = Vec::Ones(2);
  g.seed = 3;
  const DynDataset data = gen_dynamics_data(spec, g);

  TrainConfig cfg;
  cfg.hidden = {32};
  cfg.epochs = 60;
  cfg.batch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.seed = 4;
  const TrainResult r = train_dynamics(data, cfg);
  for (std::size_t i = 1; i < r.checkpoint_history.size(); ++i)
    CHECK(r.checkpoint_history[i] <= r.checkpoint_history[i - 1]);

  g.seed = 99;
  g.n_traj = 5;
  const Transitions held = transitions(gen_dynamics_data(spec, g));
  const Mat pred = predict_step(r.model, held.states, held.inputs, 0.1);
  const double rel = (pred - held.next).norm() / held.next.norm();
  CHECK(rel < 0.01);
}

TEST_CASE("training is deterministic") {
  const DynDataset data = gen_dynamics_data(dynamics::vehicle_system(), vehicle_gen(4, 8));
  TrainConfig cfg;
  cfg.hidden = {8};
  cfg.epochs = 2;
  cfg.seed = 1;
  CHECK(train_dynamics(data, cfg).model.parameters() == train_dynamics(data, cfg).model.parameters());
}

TEST_CASE("validation split keeps whole trajectories") {
  const DynDataset data = gen_dynamics_data(dynamics::vehicle_system(), vehicle_gen(10, 2));
  const auto [train, val] = split_trajectories(data, 0.1, 7);
  CHECK(train.size() == 9);
  CHECK(val.size() == 1);
}

TEST_CASE("dataset files round-trip") {
  const GenerationConfig g = vehicle_gen(2, 4);
  const DynDataset data = gen_dynamics_data(dynamics::vehicle_system(), g);
  const auto dir = std::filesystem::temp_directory_path() / "nicbf_test_dyn";
  std::filesystem::remove_all(dir);
  save_dataset(data, g, dir.string());
  const DynDataset back = load_dataset(dir.string());
  CHECK(back.dt == data.dt);
  CHECK(transitions(back).next == transitions(data).next);
  CHECK(transitions(back).inputs == transitions(data).inputs);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir.string()), IoError);
}
