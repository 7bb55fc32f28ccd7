#include "fnascent/ascent.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace fnascent;
using namespace fnascent::ascent;

namespace {

const MertonProblem kMerton({0.5}, 1.0, 1.0);

// v_w = 1, v_ww = -1 everywhere.
FieldPtr unit_curvature_field() {
  return std::make_shared<FunctionField>(1, [](double, const Vector&) {
    FieldValue fv;
    fv.value = 0.0;
    fv.grad = Vector::Ones(1);
    fv.hess = -Matrix::Ones(1, 1);
    return fv;
  });
}

Cloud small_cloud(int n, std::uint64_t seed = 1) {
  return residual::uniform_points(1.0, Vector::Constant(1, -0.5), Vector::Constant(1, 0.5), n, seed);
}

Direction constant_direction(const Cloud& cloud, double ell) {
  Direction d;
  d.cloud = cloud;
  d.ell.assign(cloud.size(), Matrix::Constant(1, 1, ell));
  return d;
}

AscentConfig oracle_config() {
  AscentConfig c;
  c.region_lo = Vector::Constant(1, -0.5);
  c.region_hi = Vector::Constant(1, 0.5);
  c.cloud_size = 256;
  c.test_points = 64;
  c.representation = SigmaRepresentation::Constant;
  c.probe = Vector::Zero(1);
  return c;
}

}  // namespace

TEST_CASE("direction norm examples") {
  const Direction d = compute_direction(kMerton, *unit_curvature_field(), kMerton.constant_field(0.2),
                                        small_cloud(100), std::numeric_limits<double>::infinity());
  for (const auto& e : d.ell) CHECK(e(0, 0) == doctest::Approx(-0.3).epsilon(1e-15));
  CHECK(d.norm == doctest::Approx(0.3).epsilon(1e-15));

  const std::vector<Matrix> two{Matrix::Constant(1, 1, -0.3), Matrix::Constant(1, 1, 0.1)};
  CHECK(direction_norm(two, 1.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(direction_norm(two, INFINITY) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(direction_norm(two, 2.0) == doctest::Approx(std::sqrt(0.05)).epsilon(1e-15));
}

TEST_CASE("the oracle field at the optimum has no direction") {
  const Direction d = compute_direction(kMerton, *kMerton.oracle(), kMerton.constant_field(0.5),
                                        small_cloud(500), INFINITY);
  CHECK(d.norm <= 1e-6);
}

TEST_CASE("non-finite directions are rejected") {
  const auto bad = std::make_shared<FunctionField>(1, [](double, const Vector&) {
    FieldValue fv;
    fv.grad = Vector::Constant(1, std::nan(""));
    fv.hess = -Matrix::Ones(1, 1);
    return fv;
  });
  CHECK_THROWS_AS(compute_direction(kMerton, *bad, kMerton.constant_field(0.2), small_cloud(4), 1.0),
                  DirectionError);
}

TEST_CASE("update examples") {
  const Cloud cloud = small_cloud(64);
  RefitConfig refit;
  for (auto rep : {SigmaRepresentation::Constant, SigmaRepresentation::Network}) {
    CAPTURE(to_string(rep));
    // Network refits reproduce the targets to fitting accuracy only.
    const double tol = rep == SigmaRepresentation::Constant ? 1e-12 : 1e-2;
    SUBCASE("zero direction is a fixed point") {
      const auto sigma = kMerton.constant_field(0.2);
      const auto up = update_sigma(kMerton, sigma, constant_direction(cloud, 0.0), 1.0, 1.0, rep, refit, 3);
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK(std::abs(up.sigma(cloud.t[i], cloud.x.col(i))(0, 0) - 0.2) <= tol);
      }
    }
    SUBCASE("constant update") {
      const auto up = update_sigma(kMerton, kMerton.constant_field(0.2), constant_direction(cloud, -0.3),
                                   1.0, 1.0, rep, refit, 3);
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK(std::abs(up.sigma(cloud.t[i], cloud.x.col(i))(0, 0) - 0.5) <= tol);
      }
    }
    SUBCASE("clip bounds the step") {
      const auto up = update_sigma(kMerton, kMerton.constant_field(0.2), constant_direction(cloud, -10.0),
                                   0.1, 1.0, rep, refit, 3);
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK(std::abs(up.sigma(cloud.t[i], cloud.x.col(i))(0, 0) - 0.3) <= tol);
      }
    }
  }
  SUBCASE("constant representation is exact") {
    const auto up = update_sigma(kMerton, kMerton.constant_field(0.2), constant_direction(cloud, -0.3),
                                 1.0, 1.0, SigmaRepresentation::Constant, refit, 3);
    CHECK(up.sigma.base()(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(up.residual == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("targets are projected into the domain") {
    const auto up = update_sigma(kMerton, kMerton.constant_field(0.2), constant_direction(cloud, 1.0),
                                 1.0, 1.0, SigmaRepresentation::Constant, refit, 3);
    CHECK(kMerton.in_domain(up.sigma(0.0, Vector::Zero(1))));
  }
  SUBCASE("empty cloud") {
    CHECK_THROWS_AS(update_sigma(kMerton, kMerton.constant_field(0.2), Direction{}, 1.0, 1.0,
                                 SigmaRepresentation::Constant, refit, 3),
                    ConfigError);
  }
  SUBCASE("refit gate") {
    RefitConfig tight = refit;
    tight.tolerance = 1e-12;
    tight.train.epochs = 1;
    Direction wavy;
    wavy.cloud = cloud;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      wavy.ell.push_back(Matrix::Constant(1, 1, 0.2 * std::sin(17.0 * cloud.x(0, i))));
    }
    try {
      (void)update_sigma(kMerton, kMerton.constant_field(0.4), wavy, 1.0, 1.0, SigmaRepresentation::Network,
                         tight, 3);
      FAIL("expected RefitError");
    } catch (const RefitError& e) {
      CHECK(e.residual() > 1e-12);
    }
  }
}

TEST_CASE("fixed point and clip invariance properties") {
  const Cloud cloud = small_cloud(200, 9);
  Direction d;
  d.cloud = cloud;
  const double delta = 0.05;
  for (std::size_t i = 0; i < cloud.size(); ++i) d.ell.push_back(Matrix::Constant(1, 1, delta * std::cos(5.0 * i)));
  RefitConfig refit;
  const double alpha = 0.7;
  const auto sigma = kMerton.constant_field(0.4);
  const auto a = update_sigma(kMerton, sigma, d, alpha, 1.0, SigmaRepresentation::Network, refit, 5);
  const auto b = update_sigma(kMerton, sigma, d, alpha, 10.0, SigmaRepresentation::Network, refit, 5);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vector x = cloud.x.col(i);
    CHECK(std::abs(a.sigma(cloud.t[i], x)(0, 0) - 0.4) <= alpha * delta + refit.tolerance);
    CHECK(a.sigma(cloud.t[i], x)(0, 0) == b.sigma(cloud.t[i], x)(0, 0));
  }
}

TEST_CASE("oracle ascent") {
  SUBCASE("started at the optimum it stops at once") {
    OracleSolver solver;
    const auto start = kMerton.constant_field(0.5);
    const RunReport r = run_ascent(kMerton, oracle_config(), solver, 1, &start);
    CHECK(r.termination == Termination::Converged);
    CHECK(r.iterations.size() == 1u);
    CHECK(r.iterations[0].norm <= oracle_config().tolerance);
  }
  SUBCASE("values increase monotonically and sigma reaches the optimum") {
    OracleSolver solver;
    auto cfg = oracle_config();
    cfg.tolerance = 1e-5;
    cfg.max_iterations = 50;
    std::vector<double> probe;
    std::vector<double> sigmas;
    const RunReport r = run_ascent(kMerton, cfg, solver, 2, nullptr,
                                   [&](const IterationRecord& rec, const DiffusionField& s, const InnerResult&) {
                                     probe.push_back(rec.probe_value);
                                     sigmas.push_back(s.base()(0, 0));
                                   });
    CHECK(static_cast<int>(r.iterations.size()) <= 50);
    for (std::size_t m = 1; m < probe.size(); ++m) CHECK(probe[m] >= probe[m - 1] - 1e-9);
    CHECK(std::abs(sigmas.back() - 0.5) <= 1e-3);
    CHECK(std::abs(r.sigma(0.3, Vector::Zero(1))(0, 0) - 0.5) <= 1e-3);
    CHECK(r.iterations.back().mse <= 1e-6);
  }
  SUBCASE("max iterations") {
    OracleSolver solver;
    auto cfg = oracle_config();
    cfg.max_iterations = 2;
    const RunReport r = run_ascent(kMerton, cfg, solver, 3);
    CHECK(r.termination == Termination::MaxIterations);
    CHECK(r.iterations.size() == 2u);
  }
  SUBCASE("inner failures carry the partial report") {
    struct Failing final : InnerSolver {
      InnerResult solve(const Problem& p, const DiffusionField& s, int m, std::uint64_t seed) override {
        if (m == 3) throw Error("inner solve failed");
        return OracleSolver{}.solve(p, s, m, seed);
      }
    } solver;
    try {
      (void)run_ascent(kMerton, oracle_config(), solver, 4);
      FAIL("expected AscentFailure");
    } catch (const AscentFailure& e) {
      CHECK(e.partial().termination == Termination::Failed);
      CHECK(e.partial().iterations.size() == 2u);
    }
  }
}

TEST_CASE("Feynman-Kac directional derivative") {
  const auto sigma = kMerton.constant_field(0.2);
  SUBCASE("zero direction") {
    const auto zero = [](double, const Vector&) { return Matrix::Zero(1, 1); };
    const auto est = fk_directional_derivative(kMerton, *unit_curvature_field(), sigma, zero, 0.0,
                                               Vector::Zero(1), 64, 1);
    CHECK(est.estimate == 0.0);
    CHECK(est.standard_error == 0.0);
  }
  SUBCASE("constant ell gives alpha c^2 (T - t)") {
    // ell = -0.3 everywhere and k = 0 for the unit-curvature field.
    const double alpha = 0.7;
    const double c = -0.3;
    const auto dir = [&](double, const Vector&) { return Matrix::Constant(1, 1, -alpha * c); };
    for (double t : {0.0, 0.25, 0.6}) {
      const auto est = fk_directional_derivative(kMerton, *unit_curvature_field(), sigma, dir, t,
                                                 Vector::Constant(1, 0.1), 200, 2);
      CHECK(std::abs(est.estimate - alpha * c * c * (1.0 - t)) <= 3.0 * est.standard_error + 1e-12);
    }
  }
  SUBCASE("ascent direction under the oracle is positive") {
    const auto sub = kMerton.constant_field(0.3);
    const auto field = kMerton.semilinear_oracle(sub);
    const auto dir = [&](double t, const Vector& x) {
      return Matrix(-0.5 * linearization_coeffs(kMerton, *field, sub, t, x).ell);
    };
    const auto est = fk_directional_derivative(kMerton, *field, sub, dir, 0.0, Vector::Zero(1), 500, 3);
    CHECK(est.estimate > 0.0);
    CHECK(est.estimate >= -3.0 * est.standard_error);
  }
  SUBCASE("invalid arguments") {
    const auto zero = [](double, const Vector&) { return Matrix::Zero(1, 1); };
    CHECK_THROWS_AS(fk_directional_derivative(kMerton, *unit_curvature_field(), sigma, zero, 0.0,
                                              Vector::Zero(1), 0, 1),
                    ConfigError);
  }
}

TEST_CASE("step schedule and names") {
  AscentConfig c;
  c.step0 = 0.5;
  CHECK(c.step(0) == 0.5);
  CHECK(c.step(10) == doctest::Approx(0.25));
  CHECK(representation_from_string(to_string(SigmaRepresentation::Network)) == SigmaRepresentation::Network);
  CHECK(to_string(Termination::Converged) == "converged");
  CHECK_THROWS_AS(representation_from_string("spline"), ConfigError);
  c.region_lo = Vector::Constant(1, 1.0);
  c.region_hi = Vector::Zero(1);
  CHECK_THROWS_AS(c.validate(1), ConfigError);
  c.region_lo = Vector::Zero(1);
  CHECK_NOTHROW(c.validate(1));
  CHECK_THROWS_AS(c.validate(2), ConfigError);
  c.norm_order = 0.5;
  CHECK_THROWS_AS(c.validate(1), ConfigError);
}
