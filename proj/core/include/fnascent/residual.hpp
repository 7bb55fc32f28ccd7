#pragma once

#include "fnascent/common.hpp"
#include "fnascent/field.hpp"
#include "fnascent/problems.hpp"
#include "fnascent/sde.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

// Residual of a candidate field under the fully nonlinear operator,
//   E[v](t, x) = h(t, x, v, Dv, D2v) - (sigma^T sigma) : D2v / 2 + f(t, x, v, Dv, sigma),
// which is >= 0 for sigma in D_f and vanishes where sigma attains the supremum.
namespace fnascent::residual {

struct PointResidual {
  double value = 0.0;
  bool violation = false;  // D2v outside D_h; value is meaningless
};

PointResidual pointwise_residual(const Problem& problem, const FieldValue& field,
                                 const Matrix& sigma, double t, const Vector& x);
PointResidual pointwise_residual(const Problem& problem, const FieldEstimate& field,
                                 const DiffusionField& sigma, double t, const Vector& x);

/// Space-time sample locations: t[i] with state column x.col(i).
struct TestPoints {
  std::vector<double> t;
  Matrix x;
  std::size_t size() const { return t.size(); }
};

/// Uniform on [0, horizon] x [lo, hi].
TestPoints uniform_points(double horizon, const Vector& lo, const Vector& hi, int count,
                          std::uint64_t seed);

struct ResidualSample {
  double t = 0.0;
  Vector x;
  double residual = 0.0;
  bool violation = false;
};

std::vector<ResidualSample> sample_residuals(const Problem& problem, const FieldEstimate& field,
                                             const DiffusionField& sigma, const TestPoints& points);

/// CSV with columns t, x_0..x_{d-1}, residual, violation.
void write_residual_csv(const std::vector<ResidualSample>& samples, std::ostream& out);

class UnreliableEstimateError : public Error {
 public:
  UnreliableEstimateError(const std::string& what, double fraction)
      : Error(what), fraction_(fraction) {}
  double violation_fraction() const { return fraction_; }

 private:
  double fraction_;
};

struct PathResidual {
  double estimate = 0.0;
  double standard_error = 0.0;
  double violation_fraction = 0.0;
  int paths = 0;
};

/// Monte-Carlo mean of sum_n E[v](t_n, X_n) dt along dX = sigma^T dB.
/// Violation points are excluded and counted. Throws UnreliableEstimateError
/// when more than half of the points are violations.
PathResidual path_residual(const Problem& problem, const FieldEstimate& field,
                           const DiffusionField& sigma, const sde::GridSpec& grid,
                           const sde::InitialSampler& x0, int n_paths, std::uint64_t seed);

struct MseReport {
  double mse = 0.0;
  double std = 0.0;  // standard deviation of the squared errors
  int count = 0;
};

/// Throws std::invalid_argument on an empty point set.
MseReport mse_report(const FieldEstimate& field, const FieldEstimate& oracle,
                     const TestPoints& points);

}  // namespace fnascent::residual
