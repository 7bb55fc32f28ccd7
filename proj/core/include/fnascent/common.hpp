#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fnascent {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

// Error taxonomy. Every failure mode named by the public API maps onto one of
// these so callers (and the CLI exit-code logic) can dispatch on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NoOracleError : public Error {
 public:
  using Error::Error;
};

/// Raised when a simulated or rolled-out quantity stops being finite.
class BlowupError : public Error {
 public:
  BlowupError(const std::string& what, int step, int path)
      : Error(what), step_(step), path_(path) {}
  int step() const noexcept { return step_; }
  int path() const noexcept { return path_; }

 private:
  int step_;
  int path_;
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace fnascent
