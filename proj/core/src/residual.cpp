#include "fnascent/residual.hpp"

#include "fnascent/parallel.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

namespace fnascent::residual {

PointResidual pointwise_residual(const Problem& problem, const FieldValue& field,
                                 const Matrix& sigma, double t, const Vector& x) {
  const ExtendedReal h = problem.h(t, x, field.value, field.grad, field.hess);
  if (!h.is_finite()) return {0.0, true};
  const double f = problem.f(t, x, field.value, field.grad, sigma);
  return {h.value - diffusion_term(sigma, field.hess) + f, false};
}

PointResidual pointwise_residual(const Problem& problem, const FieldEstimate& field,
                                 const DiffusionField& sigma, double t, const Vector& x) {
  return pointwise_residual(problem, field.eval(t, x), sigma(t, x), t, x);
}

TestPoints uniform_points(double horizon, const Vector& lo, const Vector& hi, int count,
                          std::uint64_t seed) {
  if (lo.size() != hi.size()) throw ShapeError("test box bounds differ in dimension");
  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TestPoints pts;
  pts.t.resize(count);
  pts.x.resize(lo.size(), count);
  for (int i = 0; i < count; ++i) {
    pts.t[i] = horizon * u(engine);
    for (Eigen::Index c = 0; c < lo.size(); ++c) pts.x(c, i) = lo(c) + (hi(c) - lo(c)) * u(engine);
  }
  return pts;
}

std::vector<ResidualSample> sample_residuals(const Problem& problem, const FieldEstimate& field,
                                             const DiffusionField& sigma, const TestPoints& points) {
  std::vector<ResidualSample> out(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    const Vector x = points.x.col(static_cast<Eigen::Index>(i));
    const PointResidual r = pointwise_residual(problem, field, sigma, points.t[i], x);
    out[i] = {points.t[i], x, r.value, r.violation};
  });
  return out;
}

void write_residual_csv(const std::vector<ResidualSample>& samples, std::ostream& out) {
  const Eigen::Index d = samples.empty() ? 0 : samples.front().x.size();
  out << "t";
  for (Eigen::Index i = 0; i < d; ++i) out << ",x_" << i;
  out << ",residual,violation\n";
  char buf[32];
  auto num = [&](double v) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
  };
  for (const auto& s : samples) {
    num(s.t);
    for (Eigen::Index i = 0; i < d; ++i) {
      out << ',';
      num(s.x(i));
    }
    out << ',';
    if (s.violation) {
      out << "nan";
    } else {
      num(s.residual);
    }
    out << ',' << (s.violation ? 1 : 0) << '\n';
  }
}

PathResidual path_residual(const Problem& problem, const FieldEstimate& field,
                           const DiffusionField& sigma, const sde::GridSpec& grid,
                           const sde::InitialSampler& x0, int n_paths, std::uint64_t seed) {
  const sde::LoadingFn loading = [&sigma](double t, const Vector& x) {
    return Matrix(sigma(t, x).transpose());
  };
  const sde::PathBatch batch = sde::simulate({}, loading, x0, grid, n_paths, seed);
  const double dt = grid.dt();
  std::vector<double> integral(n_paths, 0.0);
  std::vector<int> violations(n_paths, 0);
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
    for (int n = 0; n < grid.steps; ++n) {
      const Vector x = batch.states[n].col(static_cast<Eigen::Index>(p));
      const PointResidual r = pointwise_residual(problem, field, sigma, grid.time(n), x);
      if (r.violation) {
        ++violations[p];
      } else {
        integral[p] += r.value * dt;
      }
    }
  });
  long total_violations = 0;
  for (int v : violations) total_violations += v;
  PathResidual out;
  out.paths = n_paths;
  out.violation_fraction =
      static_cast<double>(total_violations) / (static_cast<double>(n_paths) * grid.steps);
  if (out.violation_fraction > 0.5) {
    throw UnreliableEstimateError("residual estimate unreliable: " +
                                      std::to_string(100.0 * out.violation_fraction) +
                                      "% of points leave the domain of h",
                                  out.violation_fraction);
  }
  double mean = 0.0;
  for (double v : integral) mean += v;
  mean /= n_paths;
  double var = 0.0;
  for (double v : integral) var += (v - mean) * (v - mean);
  var = n_paths > 1 ? var / (n_paths - 1) : 0.0;
  out.estimate = mean;
  out.standard_error = std::sqrt(var / n_paths);
  return out;
}

MseReport mse_report(const FieldEstimate& field, const FieldEstimate& oracle,
                     const TestPoints& points) {
  if (points.size() == 0) throw std::invalid_argument("mse_report: empty test set");
  std::vector<double> sq(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    const Vector x = points.x.col(static_cast<Eigen::Index>(i));
    const double e = field.value(points.t[i], x) - oracle.value(points.t[i], x);
    sq[i] = e * e;
  });
  MseReport r;
  r.count = static_cast<int>(sq.size());
  for (double s : sq) r.mse += s;
  r.mse /= r.count;
  double var = 0.0;
  for (double s : sq) var += (s - r.mse) * (s - r.mse);
  r.std = std::sqrt(var / r.count);
  return r;
}

}  // namespace fnascent::residual
