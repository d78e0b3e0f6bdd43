#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "nicbf/dynamics.hpp"
#include "oracles.hpp"

using namespace nicbf;
using namespace nicbf::dynamics;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

Vec hover_state() { return Vec::Zero(12); }

}  // namespace

TEST_CASE("vehicle field") {
  CHECK(vehicle_field(v2(0.3, 0.4), v2(1, 0)) == v2(1, 0));
  CHECK(vehicle_field(v2(0.3, 0.4), v2(0, 1.3)).isZero(0.0));
  const Vec q = vehicle_field(v2(0, 0), v2(1, std::numbers::pi / 2));
  CHECK(std::abs(q(0)) < 1e-12);
  CHECK(std::abs(q(1) - 1.0) < 1e-12);
  CHECK_THROWS_AS(vehicle_field(Vec::Zero(3), v2(1, 0)), ShapeError);
}

TEST_CASE("quadrotor hovers at thrust m g") {
  const QuadrotorParams p;
  Vec u = Vec::Zero(4);
  u(0) = p.mass * p.gravity;
  CHECK(quadrotor_field(hover_state(), u, p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("quadrotor free fall") {
  Vec x = hover_state();
  x.segment(3, 3) << 0.5, -0.2, 0.1;
  const Vec d = quadrotor_field(x, Vec::Zero(4));
  CHECK(d.head(3) == x.segment(3, 3));
  CHECK(d(3) == 0.0);
  CHECK(d(4) == 0.0);
  CHECK(d(5) == doctest::Approx(-9.81));
  CHECK(d.tail(6).isZero(0.0));
}

TEST_CASE("quadrotor body rates stay constant for spherical inertia without torque") {
  QuadrotorParams p;
  p.ixx = p.iyy = p.izz = 0.02;
  const SystemSpec s = quadrotor_system(p);
  Vec x = hover_state();
  x.tail(3) << 0.3, -0.2, 0.5;
  Vec u = Vec::Zero(4);
  u(0) = p.mass * p.gravity;
  for (int k = 0; k < 20; ++k) x = rk4_step(s, x, u, 0.01);
  CHECK((x.tail(3) - (Vec(3) << 0.3, -0.2, 0.5).finished()).norm() < 1e-12);
}

TEST_CASE("quadrotor near the attitude singularity is reported") {
  Vec x = hover_state();
  x(7) = std::numbers::pi / 2;
  CHECK_THROWS_AS(quadrotor_field(x, Vec::Zero(4)), SingularAttitudeError);
}

TEST_CASE("rk4 on a zero field is the identity") {
  const SystemSpec s = linear_system(Mat::Zero(2, 2), Mat::Zero(2, 1));
  const Vec x = v2(0.3, -1.2);
  CHECK(rk4_step(s, x, Vec::Zero(1), 0.1) == x);
}

TEST_CASE("rk4 one step of exponential decay") {
  const SystemSpec s = linear_system(Mat::Constant(1, 1, -1.0), Mat::Zero(1, 1));
  const double h = 0.1;
  const double x1 = rk4_step(s, Vec::Ones(1), Vec::Zero(1), h)(0);
  // One RK4 step on x_dot = -x is the degree-4 Taylor polynomial of exp(-h).
  CHECK(std::abs(x1 - (1 - h + h * h / 2 - h * h * h / 6 + h * h * h * h / 24)) < 1e-15);
  CHECK(std::abs(x1 - std::exp(-h)) <= std::pow(h, 5) / 120);
}

TEST_CASE("halving dt cuts the global error by about 16") {
  const SystemSpec s = linear_system(Mat::Constant(1, 1, -1.0), Mat::Zero(1, 1));
  auto err = [&](int steps) {
    Vec x = Vec::Ones(1);
    for (int k = 0; k < steps; ++k) x = rk4_step(s, x, Vec::Zero(1), 1.0 / steps);
    return std::abs(x(0) - std::exp(-1.0));
  };
  const double ratio = err(10) / err(20);
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("rk4 sensitivities match finite differences") {
  const SystemSpec s = vehicle_system();
  const Vec x = v2(0.2, 0.7), u = v2(0.8, 0.4);
  StepSensitivity sens;
  const Vec next = rk4_step(s, x, u, 0.1, sens);
  CHECK(next == rk4_step(s, x, u, 0.1));
  const Mat fx = oracle::fd_jacobian([&](const Vec& z) { return rk4_step(s, z, u, 0.1); }, x);
  const Mat fu = oracle::fd_jacobian([&](const Vec& w) { return rk4_step(s, x, w, 0.1); }, u);
  CHECK((sens.dx - fx).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((sens.du - fu).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("non-finite stages are numeric errors") {
  SystemSpec s;
  s.n = 1;
  s.m = 1;
  s.field = [](const Vec& x, const Vec&) { return Vec(x.array().exp().exp().exp()); };
  CHECK_THROWS_AS(rk4_step(s, Vec::Constant(1, 50.0), Vec::Zero(1), 1.0), NumericError);
}

TEST_CASE("rollout") {
  const SystemSpec s = vehicle_system();
  SUBCASE("empty input sequence") {
    const Trajectory t = rollout(s, v2(1, 2), {}, 0.1);
    CHECK(t.states.size() == 1);
    CHECK(t.inputs.empty());
  }
  SUBCASE("straight line") {
    const Trajectory t = rollout(s, v2(0, 0), std::vector<Vec>(10, v2(1, 0)), 0.1);
    CHECK((t.states.back() - v2(1, 0)).norm() < 1e-9);
    CHECK(t.states.size() == 11);
  }
  SUBCASE("concatenated inputs compose") {
    const std::vector<Vec> a{v2(1, 0.3), v2(0.5, -0.2)}, b{v2(0.2, 1.0), v2(0.7, 0.1), v2(0.1, 0.0)};
    std::vector<Vec> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    const Trajectory whole = rollout(s, v2(0.1, 0.2), ab, 0.1);
    const Trajectory first = rollout(s, v2(0.1, 0.2), a, 0.1);
    const Trajectory second = rollout(s, first.states.back(), b, 0.1);
    CHECK(whole.states.back() == second.states.back());
  }
}

TEST_CASE("two half steps agree with one step to fourth order") {
  const SystemSpec s = vehicle_system();
  const Vec x = v2(0.2, 0.3);
  const Vec u = v2(0.9, 0.6);
  SystemSpec curved;
  curved.n = 2;
  curved.m = 2;
  curved.field = [](const Vec& z, const Vec& w) { return Vec(vehicle_field(z, w) + 0.5 * z.array().sin().matrix()); };
  auto gap = [&](double dt) {
    const Vec one = rk4_step(curved, x, u, dt);
    const Vec two = rk4_step(curved, rk4_step(curved, x, u, dt / 2), u, dt / 2);
    return (one - two).norm();
  };
  CHECK(gap(0.1) < 1e-5);
  CHECK(gap(0.1) / gap(0.05) > 20.0);
  CHECK(rk4_step(s, x, u, 0.1) == rk4_step(s, x, u, 0.1));
}

TEST_CASE("trajectory CSV round-trips exactly") {
  const Trajectory t = rollout(vehicle_system(), v2(0.123456789, 0.2), {v2(1.0 / 3.0, 0.1), v2(0.2, -0.7)}, 0.1);
  std::stringstream ss;
  write_csv(t, ss);
  const std::string text = ss.str();
  CHECK(text.rfind("t,x1,x2,u1,u2\n", 0) == 0);
  const Trajectory back = read_csv(ss);
  REQUIRE(back.states.size() == t.states.size());
  for (std::size_t i = 0; i < t.states.size(); ++i) CHECK(back.states[i] == t.states[i]);
  for (std::size_t i = 0; i < t.inputs.size(); ++i) CHECK(back.inputs[i] == t.inputs[i]);
  CHECK(back.dt == doctest::Approx(0.1));
}

TEST_CASE("trajectory validation") {
  Trajectory t;
  t.dt = 0.1;
  t.states = {v2(0, 0)};
  t.inputs = {v2(1, 0)};
  CHECK_THROWS_AS(t.validate(), Error);
  t.states.push_back(v2(1, 0));
  CHECK_NOTHROW(t.validate());
  t.dt = 0.0;
  CHECK_THROWS_AS(t.validate(), Error);
}

TEST_CASE("systems by name") {
  CHECK(make_system("vehicle").n == 2);
  const SystemSpec q = make_system("quadrotor", {{"mass", 2.0}});
  CHECK(q.n == 12);
  CHECK(q.m == 4);
  Vec u = Vec::Zero(4);
  u(0) = 2.0 * 9.81;
  CHECK(q(Vec::Zero(12), u).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(make_system("pendulum"), ConfigError);
}
