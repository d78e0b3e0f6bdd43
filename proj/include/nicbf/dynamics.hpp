#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nicbf/common.hpp"

namespace nicbf::dynamics {

/// x_dot = F(x, u).
using VectorField = std::function<Vec(const Vec& x, const Vec& u)>;

/// Fills A = dF/dx (n x n) and B = dF/du (n x m).
using FieldJacobian = std::function<void(const Vec& x, const Vec& u, Mat& A, Mat& B)>;

struct QuadrotorParams {
  double mass = 1.0;     // kg
  double ixx = 0.01;     // kg m^2
  double iyy = 0.01;
  double izz = 0.02;
  double gravity = 9.81;  // m/s^2
};

struct SystemSpec {
  std::string name;
  int n = 0;
  int m = 0;
  VectorField field;
  /// Optional; central differences are used when empty.
  FieldJacobian jacobian;
  std::map<std::string, double> parameters;

  Vec operator()(const Vec& x, const Vec& u) const;
  void jacobians(const Vec& x, const Vec& u, Mat& A, Mat& B) const;
};

/// Planar point vehicle, u = (speed [m/s], heading [rad]); not affine in the heading.
Vec vehicle_field(const Vec& x, const Vec& u);

/// 12-state rigid-body quadrotor: position, inertial velocity, roll/pitch/yaw,
/// body rates. u = (total thrust [N], roll/pitch/yaw torques [N m]).
Vec quadrotor_field(const Vec& x, const Vec& u, const QuadrotorParams& params = {});

SystemSpec vehicle_system();
SystemSpec quadrotor_system(const QuadrotorParams& params = {});
/// x_dot = A x + B u.
SystemSpec linear_system(const Mat& A, const Mat& B, std::string name = "linear");

/// Lookup by name ("vehicle", "quadrotor"); quadrotor parameters read from `params`.
SystemSpec make_system(const std::string& name, const std::map<std::string, double>& params = {});

/// Classical RK4 with u held over the step. Throws NumericError on non-finite stages.
Vec rk4_step(const VectorField& field, const Vec& x, const Vec& u, double dt);
Vec rk4_step(const SystemSpec& spec, const Vec& x, const Vec& u, double dt);

/// RK4 step together with its sensitivities d x_next / d x and d x_next / d u.
struct StepSensitivity {
  Mat dx;
  Mat du;
};
Vec rk4_step(const SystemSpec& spec, const Vec& x, const Vec& u, double dt, StepSensitivity& sens);

struct Trajectory {
  double dt = 0.0;
  std::vector<Vec> states;  // one more than inputs
  std::vector<Vec> inputs;

  std::size_t steps() const { return inputs.size(); }
  int state_dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
  int input_dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().size()); }
  /// Checks len(states) == len(inputs) + 1 and dt > 0.
  void validate() const;
};

Trajectory rollout(const SystemSpec& spec, const Vec& x0, const std::vector<Vec>& inputs, double dt);

/// Header `t,x1..xn,u1..um`; the final row leaves the input columns empty.
void write_csv(const Trajectory& traj, std::ostream& out, int input_dim = -1);
Trajectory read_csv(std::istream& in);
void save_csv(const Trajectory& traj, const std::string& path, int input_dim = -1);
Trajectory load_csv(const std::string& path);

}  // namespace nicbf::dynamics
