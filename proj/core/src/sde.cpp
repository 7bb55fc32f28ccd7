#include "fnascent/sde.hpp"

#include "fnascent/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

namespace fnascent::sde {

void GridSpec::validate() const {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be positive");
  if (steps < 1) throw ConfigError("step count must be at least 1");
}

std::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t path) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
                    0x9e3779b9u};
  return std::mt19937_64(seq);
}

InitialSampler uniform_box(Vector lo, Vector hi) {
  if (lo.size() != hi.size()) throw ShapeError("box bounds differ in dimension");
  if ((hi.array() < lo.array()).any()) throw ConfigError("box upper bound below lower bound");
  return [lo = std::move(lo), hi = std::move(hi)](std::mt19937_64& engine) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector x(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) x(i) = lo(i) + (hi(i) - lo(i)) * u(engine);
    return x;
  };
}

InitialSampler point_mass(Vector x0) {
  return [x0 = std::move(x0)](std::mt19937_64&) { return x0; };
}

PathBatch simulate(const DriftFn& drift, const LoadingFn& loading, const InitialSampler& x0,
                   const GridSpec& grid, int n_paths, std::uint64_t seed) {
  grid.validate();
  if (n_paths < 1) throw ConfigError("n_paths must be at least 1");
  std::mt19937_64 probe = path_engine(seed, 0);
  const Eigen::Index dim = x0(probe).size();

  PathBatch batch;
  batch.grid = grid;
  batch.seed = seed;
  batch.states.assign(grid.steps + 1, Matrix(dim, n_paths));
  batch.increments.assign(grid.steps, Matrix(dim, n_paths));
  batch.path_ids.resize(n_paths);
  const double dt = grid.dt();
  const double sqrt_dt = std::sqrt(dt);

  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
    const auto col = static_cast<Eigen::Index>(p);
    std::mt19937_64 engine = path_engine(seed, p);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector x = x0(engine);
    batch.states[0].col(col) = x;
    batch.path_ids[p] = static_cast<int>(p);
    Vector db(dim);
    for (int n = 0; n < grid.steps; ++n) {
      for (Eigen::Index i = 0; i < dim; ++i) db(i) = sqrt_dt * normal(engine);
      const double t = grid.time(n);
      const Vector mu = drift ? drift(t, x) : Vector::Zero(dim);
      const Matrix m = loading(t, x);
      x = euler_step(x, mu, m, db, dt);
      if (!x.allFinite()) {
        throw BlowupError("simulation blow-up at step " + std::to_string(n + 1) + ", path " +
                              std::to_string(p),
                          n + 1, static_cast<int>(p));
      }
      batch.increments[n].col(col) = db;
      batch.states[n + 1].col(col) = x;
    }
  });
  return batch;
}

PathBatch select_paths(const PathBatch& batch, const std::vector<int>& columns) {
  PathBatch out;
  out.grid = batch.grid;
  out.seed = batch.seed;
  const auto n = static_cast<Eigen::Index>(columns.size());
  out.states.reserve(batch.states.size());
  for (const auto& s : batch.states) {
    Matrix m(s.rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) m.col(j) = s.col(columns[j]);
    out.states.push_back(std::move(m));
  }
  out.increments.reserve(batch.increments.size());
  for (const auto& s : batch.increments) {
    Matrix m(s.rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) m.col(j) = s.col(columns[j]);
    out.increments.push_back(std::move(m));
  }
  out.path_ids.reserve(columns.size());
  for (int c : columns) out.path_ids.push_back(batch.path_ids[c]);
  return out;
}

FilterResult filter_outliers(const PathBatch& batch, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError("outlier quantile must lie in (0, 1)");
  const int paths = batch.paths();
  const int dim = batch.dim();
  std::vector<int> all(paths);
  for (int p = 0; p < paths; ++p) all[p] = p;

  bool identical = true;
  for (const auto& s : batch.states) {
    for (int p = 1; p < paths && identical; ++p) identical = s.col(p) == s.col(0);
    if (!identical) break;
  }
  if (identical || paths == 1) return {batch, all};

  // Running max of |X_c| per path.
  Matrix peak = Matrix::Zero(dim, paths);
  for (const auto& s : batch.states) peak = peak.cwiseMax(s.cwiseAbs());

  Vector threshold(dim);
  std::vector<double> values(paths);
  const auto rank = static_cast<std::size_t>(
      std::clamp(static_cast<long>(std::ceil(quantile * paths)) - 1, 0L, static_cast<long>(paths) - 1));
  for (int c = 0; c < dim; ++c) {
    for (int p = 0; p < paths; ++p) values[p] = peak(c, p);
    std::nth_element(values.begin(), values.begin() + static_cast<long>(rank), values.end());
    threshold(c) = values[rank];
  }
  std::vector<int> kept;
  kept.reserve(paths);
  for (int p = 0; p < paths; ++p) {
    if ((peak.col(p).array() <= threshold.array()).all()) kept.push_back(p);
  }
  if (kept.empty()) {
    // Keep the least extreme path.
    Eigen::Index best = 0;
    peak.colwise().maxCoeff().minCoeff(&best);
    kept.push_back(static_cast<int>(best));
  }
  return {select_paths(batch, kept), kept};
}

void OUParams::validate() const {
  const auto n = kappa.size();
  if (theta.size() != n || nu.size() != n || rho.size() != n) {
    throw ShapeError("OU parameter vectors differ in length");
  }
  if ((nu.array() < 0.0).any()) throw ConfigError("vol-of-vol must be nonnegative");
  if ((rho.array() <= -1.0).any() || (rho.array() >= 1.0).any()) {
    throw ConfigError("correlations must lie in (-1, 1)");
  }
}

Vector OUParams::mean(const Vector& y0, double t) const {
  return theta.array() + (y0 - theta).array() * (-kappa.array() * t).exp();
}

Vector OUParams::variance(double t) const {
  Vector v(kappa.size());
  for (Eigen::Index i = 0; i < kappa.size(); ++i) {
    const double k = kappa(i);
    v(i) = std::abs(k) < 1e-12 ? nu(i) * nu(i) * t
                               : nu(i) * nu(i) * (1.0 - std::exp(-2.0 * k * t)) / (2.0 * k);
  }
  return v;
}

DriftFn ou_drift(const OUParams& p) {
  return [p](double, const Vector& y) -> Vector {
    return p.kappa.cwiseProduct(p.theta - y);
  };
}

LoadingFn ou_loading(const OUParams& p) {
  const Matrix m = p.nu.asDiagonal();
  return [m](double, const Vector&) { return m; };
}

Matrix correlate_increments(const Matrix& db0, const Matrix& dw, const Vector& rho) {
  if (db0.rows() != rho.size() || dw.rows() != rho.size() || db0.cols() != dw.cols()) {
    throw ShapeError("increment blocks and correlations disagree in shape");
  }
  const Vector comp = (1.0 - rho.array().square()).sqrt();
  return rho.asDiagonal() * db0 + comp.asDiagonal() * dw;
}

void write_paths_csv(const PathBatch& batch, std::ostream& out) {
  out << "path,step,t";
  for (int i = 0; i < batch.dim(); ++i) out << ",x_" << i;
  out << '\n';
  char buf[32];
  auto num = [&](double x) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    out.write(buf, ptr - buf);
  };
  for (int p = 0; p < batch.paths(); ++p) {
    for (std::size_t n = 0; n < batch.states.size(); ++n) {
      out << batch.path_ids[p] << ',' << n << ',';
      num(batch.grid.time(static_cast<int>(n)));
      for (int i = 0; i < batch.dim(); ++i) {
        out << ',';
        num(batch.states[n](i, p));
      }
      out << '\n';
    }
  }
}

}  // namespace fnascent::sde
