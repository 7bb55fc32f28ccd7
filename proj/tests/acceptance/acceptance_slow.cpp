// Slow acceptance criterion: the two-dimensional stochastic-volatility run.
#include "experiment/config.hpp"
#include "fnascent/ascent.hpp"
#include "fnascent/residual.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

using namespace fnascent;

namespace {

constexpr double kRelativeTol = 0.1;
constexpr int kPoints = 10;

}  // namespace

int main() {
  bool pass = false;
  std::string detail;
  try {
    const auto cfg = experiment::load_config(std::string(FNASCENT_SOURCE_DIR) + "/configs/stochvol.yaml");
    const auto problem = experiment::make_problem(cfg.problem);
    ascent::DeepBsdeSolver solver(cfg.solver, cfg.drifted, cfg.warm_start);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = ascent::run_ascent(*problem, cfg.ascent, solver, cfg.seed);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto pts = residual::uniform_points(problem->horizon(), cfg.test.region_lo, cfg.test.region_hi,
                                              kPoints, 0x5107);
    double worst = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double hat = rep.sigma(pts.t[i], pts.x.col(i))(0, 0);
      const double star = problem->optimal_sigma(pts.t[i], pts.x.col(i))(0, 0);
      worst = std::max(worst, std::abs(hat - star) / std::abs(star));
    }
    pass = worst <= kRelativeTol;
    char buf[256];
    std::snprintf(buf, sizeof buf, "max |sigma_hat_00 - Lambda(y)/eta| / (Lambda(y)/eta) = %.4f (tol %.1f) at %d points, %zu iterations, %.0f s",
                  worst, kRelativeTol, kPoints, rep.iterations.size(), seconds);
    detail = buf;
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  std::printf("%s criterion 10 (stochastic-volatility field check, d=2): %s\n", pass ? "PASS" : "FAIL", detail.c_str());
  return pass ? 0 : 1;
}
