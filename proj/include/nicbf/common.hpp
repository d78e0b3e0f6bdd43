#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nicbf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch between an operand and what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value produced by an integrator, loss or solver.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Quadrotor attitude too close to the Euler-angle singularity.
class SingularAttitudeError : public NumericError {
 public:
  using NumericError::NumericError;
};

class SolverDivergedError : public Error {
 public:
  using Error::Error;
};

/// Training stopped on a non-finite loss; message carries epoch and batch.
class TrainingAbortedError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised when a requested estimate has no usable input (empty sets,
/// all-degenerate pairs, missing bound components).
class EstimationError : public Error {
 public:
  using Error::Error;
};

class NoSafeSamplesError : public Error {
 public:
  using Error::Error;
};

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(want) +
                     ", got " + std::to_string(got));
  }
}

}  // namespace nicbf
