#include "fnascent/residual.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

using namespace fnascent;
using namespace fnascent::residual;

namespace {

const MertonProblem kMerton({0.5}, 1.0, 1.0);

TestPoints box_points(int n, std::uint64_t seed) {
  return uniform_points(1.0, Vector::Constant(1, -0.5), Vector::Constant(1, 0.5), n, seed);
}

// field plus a constant offset
FieldPtr shifted(FieldPtr base, double c) {
  return std::make_shared<FunctionField>(base->dim(), [base, c](double t, const Vector& x) {
    FieldValue fv = base->eval(t, x);
    fv.value += c;
    return fv;
  });
}

FieldPtr zero_field(int dim) {
  return std::make_shared<FunctionField>(dim, [dim](double, const Vector&) {
    FieldValue fv;
    fv.grad = Vector::Zero(dim);
    fv.hess = Matrix::Zero(dim, dim);
    return fv;
  });
}

}  // namespace

TEST_CASE("pointwise residual") {
  const auto oracle = kMerton.oracle();
  const auto pts = box_points(300, 1);
  SUBCASE("vanishes at the optimum") {
    const auto star = kMerton.constant_field(0.5);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto r = pointwise_residual(kMerton, *oracle, star, pts.t[i], pts.x.col(i));
      CHECK_FALSE(r.violation);
      CHECK(std::abs(r.value) <= 1e-6);
    }
  }
  SUBCASE("positive away from the optimum") {
    // With v_ww = -eta |v_w|, the gap is |v_w| eta (sigma - sigma*)^2 / 2.
    const auto off = kMerton.constant_field(0.6);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const FieldValue fv = oracle->eval(pts.t[i], pts.x.col(i));
      const auto r = pointwise_residual(kMerton, *oracle, off, pts.t[i], pts.x.col(i));
      CHECK(r.value > 0.0);
      CHECK(r.value == doctest::Approx(0.5 * std::abs(fv.grad(0)) * 0.01).epsilon(1e-10));
    }
  }
  SUBCASE("heat operator is exactly linear") {
    const HeatProblem heat(2, 0.5, 1.0);
    const auto sigma = heat.constant_field(0.5);
    const auto exact = heat.semilinear_oracle(sigma);
    const auto p2 = uniform_points(1.0, Vector::Constant(2, -1.0), Vector::Constant(2, 1.0), 50, 2);
    for (std::size_t i = 0; i < p2.size(); ++i) {
      CHECK(std::abs(pointwise_residual(heat, *exact, sigma, p2.t[i], p2.x.col(i)).value) <= 1e-6);
    }
  }
  SUBCASE("a flat field leaves the domain of h") {
    const auto r = pointwise_residual(kMerton, *zero_field(1), kMerton.constant_field(0.5), 0.2, Vector::Zero(1));
    CHECK(r.violation);
  }
}

TEST_CASE("sampled residuals and csv") {
  const auto pts = box_points(5, 3);
  const auto samples = sample_residuals(kMerton, *kMerton.oracle(), kMerton.constant_field(0.5), pts);
  REQUIRE(samples.size() == 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(samples[i].t == pts.t[i]);
    CHECK(samples[i].x(0) == pts.x(0, i));
  }
  std::ostringstream out;
  write_residual_csv(samples, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,x_0,residual,violation");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 5);
}

TEST_CASE("uniform points") {
  const auto a = box_points(1000, 7);
  const auto b = box_points(1000, 7);
  CHECK(a.t == b.t);
  CHECK(a.x == b.x);
  CHECK(a.x.minCoeff() >= -0.5);
  CHECK(a.x.maxCoeff() <= 0.5);
  for (double t : a.t) CHECK((t >= 0.0 && t <= 1.0));
}

TEST_CASE("path residual") {
  const sde::GridSpec grid{1.0, 20};
  const auto x0 = sde::uniform_box(Vector::Constant(1, -0.5), Vector::Constant(1, 0.5));
  SUBCASE("oracle at the optimum") {
    const auto r = path_residual(kMerton, *kMerton.oracle(), kMerton.constant_field(0.5), grid, x0, 256, 1);
    CHECK(r.paths == 256);
    CHECK(r.violation_fraction == 0.0);
    CHECK(std::abs(r.estimate) <= 1e-4 + 3.0 * r.standard_error);
  }
  SUBCASE("suboptimal sigma is detected") {
    const auto r = path_residual(kMerton, *kMerton.oracle(), kMerton.constant_field(0.8), grid, x0, 256, 1);
    CHECK(r.estimate > 3.0 * r.standard_error);
  }
  SUBCASE("a flat field is unreliable") {
    try {
      (void)path_residual(kMerton, *zero_field(1), kMerton.constant_field(0.5), grid, x0, 64, 1);
      FAIL("expected UnreliableEstimateError");
    } catch (const UnreliableEstimateError& e) {
      CHECK(e.violation_fraction() == 1.0);
    }
  }
}

TEST_CASE("mse report") {
  const auto oracle = kMerton.oracle();
  const auto pts = box_points(1000, 11);
  const auto same = mse_report(*oracle, *oracle, pts);
  CHECK(same.mse == 0.0);
  CHECK(same.std == 0.0);
  CHECK(same.count == 1000);
  const auto shift = mse_report(*shifted(oracle, 0.1), *oracle, pts);
  CHECK(shift.mse == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(shift.std <= 1e-12);
  CHECK_THROWS_AS(mse_report(*oracle, *oracle, TestPoints{}), std::invalid_argument);
}
