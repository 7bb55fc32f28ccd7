#include "fnascent/sde.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace fnascent;
using namespace fnascent::sde;

namespace {

OUParams ou1(double kappa, double theta, double nu) {
  OUParams p;
  p.kappa = Vector::Constant(1, kappa);
  p.theta = Vector::Constant(1, theta);
  p.nu = Vector::Constant(1, nu);
  p.rho = Vector::Zero(1);
  return p;
}

LoadingFn constant_loading(Matrix m) {
  return [m](double, const Vector&) { return m; };
}

}  // namespace

TEST_CASE("zero drift and diffusion keep paths constant") {
  const auto batch = simulate({}, constant_loading(Matrix::Zero(2, 2)), point_mass(Vector::Constant(2, 1.5)),
                              {1.0, 10}, 7, 3);
  CHECK(batch.paths() == 7);
  CHECK(batch.states.size() == 11u);
  for (const auto& s : batch.states) CHECK((s.array() == 1.5).all());
}

TEST_CASE("deterministic OU decays exponentially") {
  const auto p = ou1(1.0, 0.0, 0.0);
  const auto batch = simulate(ou_drift(p), ou_loading(p), point_mass(Vector::Ones(1)), {1.0, 1000}, 3, 1);
  CHECK(std::abs(batch.states.back()(0, 0) - std::exp(-1.0)) <= 1e-2);
}

TEST_CASE("OU moments match closed forms") {
  const auto p = ou1(1.5, 0.5, 0.4);
  const GridSpec grid{1.0, 200};
  const int n = 10000;
  const Vector y0 = Vector::Constant(1, 1.2);
  const auto batch = simulate(ou_drift(p), ou_loading(p), point_mass(y0), grid, n, 77);
  for (int step : {50, 200}) {
    const double t = grid.time(step);
    const RowVector y = batch.states[step].row(0);
    const double mean = y.mean();
    const double var = (y.array() - mean).square().sum() / (n - 1);
    const double m_exact = p.mean(y0, t)(0);
    const double v_exact = p.variance(t)(0);
    CHECK(std::abs(mean - m_exact) <= 5.0 * std::sqrt(v_exact / n));
    CHECK(std::abs(var - v_exact) <= 5.0 * v_exact * std::sqrt(2.0 / (n - 1)));
  }
}

TEST_CASE("driftless increments have zero mean") {
  const auto batch = simulate({}, constant_loading(Matrix::Identity(2, 2)), point_mass(Vector::Zero(2)),
                              {1.0, 20}, 5000, 4);
  const double dt = batch.grid.dt();
  for (const auto& db : batch.increments) {
    for (int i = 0; i < 2; ++i) CHECK(std::abs(db.row(i).mean()) <= 5.0 * std::sqrt(dt / 5000));
  }
}

TEST_CASE("replay from stored increments is bit exact") {
  auto p = ou1(2.0, 0.3, 0.5);
  const auto drift = ou_drift(p);
  const auto loading = ou_loading(p);
  const GridSpec grid{0.5, 25};
  const auto batch = simulate(drift, loading, uniform_box(Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)),
                              grid, 64, 2024);
  for (int path = 0; path < batch.paths(); ++path) {
    Vector x = batch.state(0, path);
    for (int nstep = 0; nstep < grid.steps; ++nstep) {
      const double t = grid.time(nstep);
      x = euler_step(x, drift(t, x), loading(t, x), batch.increments[nstep].col(path), grid.dt());
      REQUIRE(x(0) == batch.states[nstep + 1](0, path));
    }
  }
}

TEST_CASE("path streams do not depend on the batch size") {
  const auto loading = constant_loading(Matrix::Identity(1, 1));
  const auto x0 = uniform_box(Vector::Constant(1, 0.0), Vector::Constant(1, 1.0));
  const auto small = simulate({}, loading, x0, {1.0, 5}, 3, 9);
  const auto large = simulate({}, loading, x0, {1.0, 5}, 50, 9);
  for (int s = 0; s <= 5; ++s) CHECK(small.states[s] == large.states[s].leftCols(3));
}

TEST_CASE("non-finite states raise a blow-up error naming step and path") {
  const DriftFn drift = [](double t, const Vector& x) {
    return t >= 0.29 ? Vector::Constant(x.size(), std::numeric_limits<double>::infinity()) : Vector::Zero(x.size());
  };
  try {
    (void)simulate(drift, constant_loading(Matrix::Zero(1, 1)), point_mass(Vector::Zero(1)), {1.0, 10}, 1, 1);
    FAIL("expected BlowupError");
  } catch (const BlowupError& e) {
    CHECK(e.step() == 4);
    CHECK(e.path() == 0);
  }
}

TEST_CASE("outlier filtering") {
  SUBCASE("identical paths are kept") {
    const auto batch = simulate({}, constant_loading(Matrix::Zero(1, 1)), point_mass(Vector::Ones(1)), {1.0, 5}, 20, 1);
    const auto r = filter_outliers(batch, 0.95);
    CHECK(r.kept.size() == 20u);
    CHECK(r.batch.paths() == 20);
  }
  SUBCASE("a designed outlier is removed") {
    auto batch = simulate({}, constant_loading(Matrix::Identity(1, 1)), point_mass(Vector::Zero(1)), {1.0, 10}, 100, 6);
    for (auto& s : batch.states) s(0, 37) *= 1000.0;
    const auto r = filter_outliers(batch, 0.95);
    CHECK(std::find(r.kept.begin(), r.kept.end(), 37) == r.kept.end());
    CHECK(r.kept.size() >= 90u);
    for (std::size_t j = 0; j < r.kept.size(); ++j) {
      CHECK(r.batch.path_ids[j] == r.kept[j]);
      CHECK(r.batch.states.back()(0, static_cast<Eigen::Index>(j)) == batch.states.back()(0, r.kept[j]));
    }
  }
  SUBCASE("quantile outside (0, 1) is a configuration error") {
    const auto batch = simulate({}, constant_loading(Matrix::Identity(1, 1)), point_mass(Vector::Zero(1)), {1.0, 2}, 4, 1);
    CHECK_THROWS_AS(filter_outliers(batch, 1.0), ConfigError);
  }
}

TEST_CASE("correlated increments have the requested correlation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  const int n = 20000;
  Matrix b0(1, n), w(1, n);
  for (int j = 0; j < n; ++j) {
    b0(0, j) = z(rng);
    w(0, j) = z(rng);
  }
  const Matrix b1 = correlate_increments(b0, w, Vector::Constant(1, -0.6));
  const double corr = (b0.array() * b1.array()).mean();
  CHECK(std::abs(corr + 0.6) <= 5.0 / std::sqrt(n));
  CHECK(std::abs(b1.array().square().mean() - 1.0) <= 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("OU parameter validation") {
  auto p = ou1(1.0, 0.0, -0.1);
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = ou1(1.0, 0.0, 0.1);
  p.rho(0) = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  CHECK_THROWS_AS((GridSpec{1.0, 0}.validate()), ConfigError);
}

TEST_CASE("paths CSV layout") {
  const auto batch = simulate({}, constant_loading(Matrix::Zero(2, 2)), point_mass(Vector::Zero(2)), {1.0, 2}, 2, 1);
  std::ostringstream os;
  write_paths_csv(batch, os);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "path,step,t,x_0,x_1");
  int rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  CHECK(rows == 6);
}
