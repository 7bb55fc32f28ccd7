#include "fnascent/approximator.hpp"
#include "fnascent/ascent.hpp"
#include "fnascent/bsde.hpp"
#include "fnascent/problems.hpp"
#include "fnascent/sde.hpp"

#include <benchmark/benchmark.h>

using namespace fnascent;

namespace {

// Batched value and directional derivative, the inner kernel of the loss.
void BM_ForwardTangent(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const auto net = nn::Network::random(nn::Network::default_widths(2, 1), nn::Activation::Tanh, 1);
  const Matrix in = Matrix::Random(2, batch);
  const Matrix dir = Matrix::Random(2, batch);
  nn::Network::TangentCache cache;
  RowVector value, tangent;
  for (auto _ : state) {
    net.forward_tangent(in, dir, cache, value, tangent);
    benchmark::DoNotOptimize(tangent.data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ForwardTangent)->Arg(256)->Arg(4096);

void BM_InputHessian(benchmark::State& state) {
  const auto net = nn::Network::random(nn::Network::default_widths(3, 2), nn::Activation::Tanh, 2);
  const Vector x = Vector::Random(3);
  double v;
  Vector g;
  Matrix h;
  for (auto _ : state) {
    net.derivatives(x, v, g, h);
    benchmark::DoNotOptimize(h.data());
  }
}
BENCHMARK(BM_InputHessian);

void BM_SimulateOU(benchmark::State& state) {
  sde::OUParams p;
  p.kappa = Vector::Constant(1, 1.0);
  p.theta = Vector::Constant(1, 1.0);
  p.nu = Vector::Constant(1, 0.2);
  p.rho = Vector::Zero(1);
  const int paths = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto batch = sde::simulate(sde::ou_drift(p), sde::ou_loading(p), sde::point_mass(Vector::Ones(1)),
                               {1.0, 20}, paths, 3);
    benchmark::DoNotOptimize(batch.states.back().data());
  }
  state.SetItemsProcessed(state.iterations() * paths * 20);
}
BENCHMARK(BM_SimulateOU)->Arg(4096);

struct MertonSetup {
  MertonProblem problem{{0.5}, 1.0, 1.0};
  DiffusionField sigma = problem.constant_field(0.5);
  bsde::SemilinearSpec spec = bsde::from_problem(problem, sigma);
  bsde::SolverConfig config;
  bsde::Networks nets;
  sde::PathBatch paths;

  explicit MertonSetup(int n) {
    config.x0_lo = Vector::Constant(1, -1.0);
    config.x0_hi = Vector::Constant(1, 1.0);
    nets = bsde::Networks::initial(1, config, 4);
    paths = bsde::simulate_paths(spec, config, n, 5);
  }
};

void BM_Rollout(benchmark::State& state) {
  const MertonSetup s(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    const Matrix y = bsde::rollout_Y(s.spec, s.nets, s.paths, bsde::LossVariant::Modified);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Rollout)->Arg(256);

void BM_LossGradient(benchmark::State& state) {
  const MertonSetup s(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto g = bsde::loss_gradient(s.spec, s.nets, s.paths, bsde::LossVariant::Modified);
    benchmark::DoNotOptimize(g.loss);
  }
}
BENCHMARK(BM_LossGradient)->Arg(256);

void BM_ComputeDirection(benchmark::State& state) {
  const MertonProblem m({0.5}, 1.0, 1.0);
  const auto field = std::make_shared<NetworkField>(
      nn::Network::random(nn::Network::default_widths(2, 1), nn::Activation::Tanh, 6));
  const auto cloud = residual::uniform_points(1.0, Vector::Constant(1, -0.5), Vector::Constant(1, 0.5), 4096, 7);
  const auto sigma = m.constant_field(0.5);
  for (auto _ : state) {
    auto d = ascent::compute_direction(m, *field, sigma, cloud, 1.0);
    benchmark::DoNotOptimize(d.norm);
  }
}
BENCHMARK(BM_ComputeDirection);

}  // namespace

// The packaged benchmark_main archive is LTO bytecode from another compiler
// release, so the entry point is defined here.
BENCHMARK_MAIN();
