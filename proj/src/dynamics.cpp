#include "nicbf/dynamics.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nicbf/csv.hpp"

namespace nicbf::dynamics {
namespace {

constexpr double kGimbalMargin = 1e-3;

void check_finite(const Vec& v, const char* where) {
  if (!v.allFinite()) throw NumericError(std::string("rk4_step: non-finite value in ") + where);
}

void central_difference_jacobians(const VectorField& f, const Vec& x, const Vec& u, Mat& A,
                                  Mat& B) {
  const Vec f0 = f(x, u);
  A.resize(f0.size(), x.size());
  B.resize(f0.size(), u.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
    Vec xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    A.col(j) = (f(xp, u) - f(xm, u)) / (2.0 * h);
  }
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(u(j)));
    Vec up = u, um = u;
    up(j) += h;
    um(j) -= h;
    B.col(j) = (f(x, up) - f(x, um)) / (2.0 * h);
  }
}

}  // namespace

Vec SystemSpec::operator()(const Vec& x, const Vec& u) const {
  require_dim(x.size(), n, "vector_field state");
  require_dim(u.size(), m, "vector_field input");
  return field(x, u);
}

void SystemSpec::jacobians(const Vec& x, const Vec& u, Mat& A, Mat& B) const {
  require_dim(x.size(), n, "jacobians state");
  require_dim(u.size(), m, "jacobians input");
  if (jacobian) {
    jacobian(x, u, A, B);
  } else {
    central_difference_jacobians(field, x, u, A, B);
  }
}

Vec vehicle_field(const Vec& x, const Vec& u) {
  require_dim(x.size(), 2, "vehicle_field state");
  require_dim(u.size(), 2, "vehicle_field input");
  return Eigen::Vector2d(u(0) * std::cos(u(1)), u(0) * std::sin(u(1)));
}

Vec quadrotor_field(const Vec& x, const Vec& u, const QuadrotorParams& p) {
  require_dim(x.size(), 12, "quadrotor_field state");
  require_dim(u.size(), 4, "quadrotor_field input");
  const double phi = x(6), theta = x(7), psi = x(8);
  const double limit = std::numbers::pi / 2.0 - kGimbalMargin;
  if (std::abs(phi) >= limit || std::abs(theta) >= limit) {
    throw SingularAttitudeError("quadrotor_field: roll/pitch too close to +-pi/2");
  }
  const double wp = x(9), wq = x(10), wr = x(11);
  const double cphi = std::cos(phi), sphi = std::sin(phi);
  const double cth = std::cos(theta), sth = std::sin(theta), tth = std::tan(theta);
  const double cpsi = std::cos(psi), spsi = std::sin(psi);
  const double thrust = u(0) / p.mass;

  Vec dx(12);
  dx.segment<3>(0) = x.segment<3>(3);
  // Thrust along body z rotated into the inertial frame (ZYX Euler angles).
  dx(3) = thrust * (cphi * sth * cpsi + sphi * spsi);
  dx(4) = thrust * (cphi * sth * spsi - sphi * cpsi);
  dx(5) = thrust * cphi * cth - p.gravity;
  dx(6) = wp + sphi * tth * wq + cphi * tth * wr;
  dx(7) = cphi * wq - sphi * wr;
  dx(8) = (sphi * wq + cphi * wr) / cth;
  dx(9) = ((p.iyy - p.izz) * wq * wr + u(1)) / p.ixx;
  dx(10) = ((p.izz - p.ixx) * wp * wr + u(2)) / p.iyy;
  dx(11) = ((p.ixx - p.iyy) * wp * wq + u(3)) / p.izz;
  return dx;
}

SystemSpec vehicle_system() {
  SystemSpec s;
  s.name = "vehicle";
  s.n = 2;
  s.m = 2;
  s.field = vehicle_field;
  s.jacobian = [](const Vec&, const Vec& u, Mat& A, Mat& B) {
    A = Mat::Zero(2, 2);
    B.resize(2, 2);
    B << std::cos(u(1)), -u(0) * std::sin(u(1)), std::sin(u(1)), u(0) * std::cos(u(1));
  };
  return s;
}

SystemSpec quadrotor_system(const QuadrotorParams& params) {
  SystemSpec s;
  s.name = "quadrotor";
  s.n = 12;
  s.m = 4;
  s.field = [params](const Vec& x, const Vec& u) { return quadrotor_field(x, u, params); };
  s.parameters = {{"mass", params.mass},
                  {"ixx", params.ixx},
                  {"iyy", params.iyy},
                  {"izz", params.izz},
                  {"gravity", params.gravity}};
  return s;
}

SystemSpec linear_system(const Mat& A, const Mat& B, std::string name) {
  if (A.rows() != A.cols() || B.rows() != A.rows()) {
    throw ShapeError("linear_system: A must be n x n and B n x m");
  }
  SystemSpec s;
  s.name = std::move(name);
  s.n = static_cast<int>(A.rows());
  s.m = static_cast<int>(B.cols());
  s.field = [A, B](const Vec& x, const Vec& u) -> Vec { return A * x + B * u; };
  s.jacobian = [A, B](const Vec&, const Vec&, Mat& dA, Mat& dB) {
    dA = A;
    dB = B;
  };
  return s;
}

SystemSpec make_system(const std::string& name, const std::map<std::string, double>& params) {
  if (name == "vehicle") return vehicle_system();
  if (name == "quadrotor") {
    QuadrotorParams p;
    auto get = [&](const char* key, double& dst) {
      if (auto it = params.find(key); it != params.end()) dst = it->second;
    };
    get("mass", p.mass);
    get("ixx", p.ixx);
    get("iyy", p.iyy);
    get("izz", p.izz);
    get("gravity", p.gravity);
    return quadrotor_system(p);
  }
  throw ConfigError("unknown system '" + name + "'");
}

Vec rk4_step(const VectorField& f, const Vec& x, const Vec& u, double dt) {
  if (!(dt > 0.0)) throw Error("rk4_step: dt must be positive");
  const Vec k1 = f(x, u);
  check_finite(k1, "stage 1");
  const Vec k2 = f(x + 0.5 * dt * k1, u);
  check_finite(k2, "stage 2");
  const Vec k3 = f(x + 0.5 * dt * k2, u);
  check_finite(k3, "stage 3");
  const Vec k4 = f(x + dt * k3, u);
  check_finite(k4, "stage 4");
  Vec next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  check_finite(next, "update");
  return next;
}

Vec rk4_step(const SystemSpec& spec, const Vec& x, const Vec& u, double dt) {
  require_dim(x.size(), spec.n, "rk4_step state");
  require_dim(u.size(), spec.m, "rk4_step input");
  return rk4_step(spec.field, x, u, dt);
}

Vec rk4_step(const SystemSpec& spec, const Vec& x, const Vec& u, double dt, StepSensitivity& sens) {
  require_dim(x.size(), spec.n, "rk4_step state");
  require_dim(u.size(), spec.m, "rk4_step input");
  if (!(dt > 0.0)) throw Error("rk4_step: dt must be positive");
  const Mat I = Mat::Identity(spec.n, spec.n);
  Mat A, B;

  const Vec k1 = spec.field(x, u);
  check_finite(k1, "stage 1");
  spec.jacobians(x, u, A, B);
  const Mat k1x = A, k1u = B;

  const Vec x2 = x + 0.5 * dt * k1;
  const Vec k2 = spec.field(x2, u);
  check_finite(k2, "stage 2");
  spec.jacobians(x2, u, A, B);
  const Mat k2x = A * (I + 0.5 * dt * k1x);
  const Mat k2u = A * (0.5 * dt * k1u) + B;

  const Vec x3 = x + 0.5 * dt * k2;
  const Vec k3 = spec.field(x3, u);
  check_finite(k3, "stage 3");
  spec.jacobians(x3, u, A, B);
  const Mat k3x = A * (I + 0.5 * dt * k2x);
  const Mat k3u = A * (0.5 * dt * k2u) + B;

  const Vec x4 = x + dt * k3;
  const Vec k4 = spec.field(x4, u);
  check_finite(k4, "stage 4");
  spec.jacobians(x4, u, A, B);
  const Mat k4x = A * (I + dt * k3x);
  const Mat k4u = A * (dt * k3u) + B;

  sens.dx = I + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
  sens.du = (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
  Vec next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  check_finite(next, "update");
  return next;
}

void Trajectory::validate() const {
  if (!(dt > 0.0)) throw Error("Trajectory: dt must be positive");
  if (states.size() != inputs.size() + 1) {
    throw ShapeError("Trajectory: need exactly one more state than inputs");
  }
}

Trajectory rollout(const SystemSpec& spec, const Vec& x0, const std::vector<Vec>& inputs,
                   double dt) {
  require_dim(x0.size(), spec.n, "rollout x0");
  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(inputs.size() + 1);
  traj.states.push_back(x0);
  traj.inputs = inputs;
  for (const Vec& u : inputs) traj.states.push_back(rk4_step(spec, traj.states.back(), u, dt));
  return traj;
}

void write_csv(const Trajectory& traj, std::ostream& out, int input_dim) {
  traj.validate();
  const int n = traj.state_dim();
  const int m = input_dim >= 0 ? input_dim : traj.input_dim();
  std::vector<std::string> header{"t"};
  for (int i = 1; i <= n; ++i) header.push_back("x" + std::to_string(i));
  for (int i = 1; i <= m; ++i) header.push_back("u" + std::to_string(i));
  out << csv::join(header) << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    std::vector<std::string> row{csv::format(static_cast<double>(k) * traj.dt)};
    for (int i = 0; i < n; ++i) row.push_back(csv::format(traj.states[k](i)));
    for (int i = 0; i < m; ++i) {
      row.push_back(k < traj.inputs.size() ? csv::format(traj.inputs[k](i)) : std::string());
    }
    out << csv::join(row) << '\n';
  }
}

Trajectory read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("trajectory csv: missing header");
  const auto header = csv::split(line);
  int n = 0, m = 0;
  for (const auto& h : header) {
    if (!h.empty() && h[0] == 'x') ++n;
    if (!h.empty() && h[0] == 'u') ++m;
  }
  if (header.empty() || header[0] != "t" || static_cast<int>(header.size()) != 1 + n + m) {
    throw IoError("trajectory csv: header must be t,x1..xn,u1..um");
  }
  Trajectory traj;
  std::vector<double> times;
  bool finished = false;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (finished) throw IoError("trajectory csv: rows after the final (input-free) row");
    const auto f = csv::split(line);
    if (static_cast<int>(f.size()) != 1 + n + m) throw IoError("trajectory csv: bad row width");
    times.push_back(csv::parse_double(f[0]));
    Vec x(n);
    for (int i = 0; i < n; ++i) x(i) = csv::parse_double(f[1 + i]);
    traj.states.push_back(std::move(x));
    const bool empty_inputs = m > 0 && f[1 + n].empty();
    if (m == 0 || empty_inputs) {
      finished = true;
      continue;
    }
    Vec u(m);
    for (int i = 0; i < m; ++i) u(i) = csv::parse_double(f[1 + n + i]);
    traj.inputs.push_back(std::move(u));
  }
  if (traj.states.empty()) throw IoError("trajectory csv: no rows");
  if (m > 0 && !finished) throw IoError("trajectory csv: missing final state row");
  traj.dt = times.size() >= 2 ? times[1] - times[0] : 1.0;
  return traj;
}

void save_csv(const Trajectory& traj, const std::string& path, int input_dim) {
  std::ostringstream ss;
  write_csv(traj, ss, input_dim);
  csv::write_file(path, ss.str());
}

Trajectory load_csv(const std::string& path) {
  std::istringstream ss(csv::read_file(path));
  return read_csv(ss);
}

}  // namespace nicbf::dynamics
