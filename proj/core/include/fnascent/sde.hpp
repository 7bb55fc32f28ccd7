#pragma once

#include "fnascent/common.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <vector>

namespace fnascent::sde {

struct GridSpec {
  double horizon = 1.0;
  int steps = 20;

  double dt() const { return horizon / steps; }
  double time(int n) const { return n * dt(); }
  void validate() const;
};

/// Per-path random stream. Path i draws from an engine keyed on (seed, i), so
/// its increments do not depend on how many other paths are simulated.
std::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t path);

using DriftFn = std::function<Vector(double t, const Vector& x)>;
/// Returns the matrix M applied to the Brownian increment: dX = mu dt + M dB.
using LoadingFn = std::function<Matrix(double t, const Vector& x)>;
using InitialSampler = std::function<Vector(std::mt19937_64& engine)>;

InitialSampler uniform_box(Vector lo, Vector hi);
InitialSampler point_mass(Vector x0);

struct PathBatch {
  GridSpec grid;
  std::uint64_t seed = 0;
  std::vector<Matrix> states;      // steps + 1 entries, each dim x paths
  std::vector<Matrix> increments;  // steps entries, each dim x paths
  std::vector<int> path_ids;       // original path index of every column

  int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().rows()); }
  int paths() const { return states.empty() ? 0 : static_cast<int>(states.front().cols()); }
  Vector state(int step, int path) const { return states[step].col(path); }
};

/// One Euler-Maruyama step; simulate() and any replay share this expression.
inline Vector euler_step(const Vector& x, const Vector& drift, const Matrix& loading,
                         const Vector& db, double dt) {
  return x + drift * dt + loading * db;
}

/// Seeded Euler-Maruyama. `drift` may be empty (driftless). Throws BlowupError
/// naming the step and path if a state turns non-finite.
PathBatch simulate(const DriftFn& drift, const LoadingFn& loading, const InitialSampler& x0,
                   const GridSpec& grid, int n_paths, std::uint64_t seed);

struct FilterResult {
  PathBatch batch;
  std::vector<int> kept;  // column indices into the input batch
};

/// Drops paths whose running max of |X_c| exceeds the per-component empirical
/// `quantile` of that statistic. A batch of identical paths is returned as is.
FilterResult filter_outliers(const PathBatch& batch, double quantile);

PathBatch select_paths(const PathBatch& batch, const std::vector<int>& columns);

struct OUParams {
  Vector kappa;
  Vector theta;
  Vector nu;
  Vector rho;

  int dim() const { return static_cast<int>(kappa.size()); }
  void validate() const;
  Vector mean(const Vector& y0, double t) const;
  Vector variance(double t) const;
};

/// dY = diag(kappa)(theta - Y) dt + diag(nu) dB1.
DriftFn ou_drift(const OUParams& p);
LoadingFn ou_loading(const OUParams& p);

/// B1_i = rho_i B0_i + sqrt(1 - rho_i^2) W_i, applied to increments.
Matrix correlate_increments(const Matrix& db0, const Matrix& dw, const Vector& rho);

/// CSV dump: path, step, t, x_0..x_{d-1}.
void write_paths_csv(const PathBatch& batch, std::ostream& out);

}  // namespace fnascent::sde
