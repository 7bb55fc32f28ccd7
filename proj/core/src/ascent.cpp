#include "fnascent/ascent.hpp"

#include "fnascent/parallel.hpp"
#include "fnascent/sde.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace fnascent::ascent {

std::string to_string(SigmaRepresentation r) {
  return r == SigmaRepresentation::Constant ? "constant" : "network";
}

SigmaRepresentation representation_from_string(const std::string& name) {
  if (name == "constant") return SigmaRepresentation::Constant;
  if (name == "network") return SigmaRepresentation::Network;
  throw ConfigError("unknown sigma representation '" + name + "' (expected constant or network)");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Converged:
      return "converged";
    case Termination::MaxIterations:
      return "max_iterations";
    case Termination::Failed:
      break;
  }
  return "failed";
}

void AscentConfig::validate(int dim) const {
  if (!(tolerance > 0.0)) throw ConfigError("ascent tolerance must be positive");
  if (max_iterations < 1) throw ConfigError("max iterations must be at least 1");
  if (!(step0 > 0.0)) throw ConfigError("step size must be positive");
  if (!(clip0 > 0.0)) throw ConfigError("clip bound must be positive");
  if (!(norm_order >= 1.0)) throw ConfigError("norm order must be at least 1");
  if (cloud_size < 1) throw ConfigError("cloud size must be at least 1");
  if (test_points < 1) throw ConfigError("test point count must be at least 1");
  if (region_lo.size() != dim || region_hi.size() != dim) {
    throw ConfigError("region must have one bound per state component");
  }
  if ((region_hi.array() < region_lo.array()).any()) throw ConfigError("region is inverted");
  if (probe && probe->size() != dim) throw ConfigError("probe point has the wrong dimension");
  refit.train.validate();
  if (!(refit.tolerance > 0.0)) throw ConfigError("refit tolerance must be positive");
}

std::vector<double> RunReport::norms() const {
  std::vector<double> out;
  for (const auto& r : iterations) out.push_back(r.norm);
  return out;
}

double direction_norm(const std::vector<Matrix>& ell, double order) {
  if (ell.empty()) return 0.0;
  if (std::isinf(order)) {
    double m = 0.0;
    for (const auto& l : ell) m = std::max(m, l.cwiseAbs().maxCoeff());
    return m;
  }
  double s = 0.0;
  for (const auto& l : ell) s += l.cwiseAbs().array().pow(order).sum();
  return std::pow(s / static_cast<double>(ell.size()), 1.0 / order);
}

Direction compute_direction(const Problem& problem, const FieldEstimate& field,
                            const DiffusionField& sigma, const Cloud& cloud, double norm_order) {
  Direction d;
  d.cloud = cloud;
  d.ell.resize(cloud.size());
  parallel_for(cloud.size(), [&](std::size_t i) {
    const Vector x = cloud.x.col(static_cast<Eigen::Index>(i));
    try {
      d.ell[i] = linearization_coeffs(problem, field, sigma, cloud.t[i], x).ell;
    } catch (const NonFiniteError& e) {
      throw DirectionError(std::string("direction is not finite: ") + e.what());
    }
  });
  d.norm = direction_norm(d.ell, norm_order);
  return d;
}

namespace {

std::mt19937_64 engine_for(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x2545f491u};
  return std::mt19937_64(seq);
}

// Least-squares fit of `net` to targets at columns of `inputs`. Returns RMS.
double fit_network(nn::Network& net, const Matrix& inputs, const RowVector& targets,
                   const nn::TrainConfig& train, std::uint64_t seed) {
  const int n = static_cast<int>(inputs.cols());
  const int batch = std::min(train.batch_size, n);
  const int batches = n / batch;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 engine = engine_for(seed, 7);
  auto state = nn::OptimizerState::for_network(net);
  nn::ParamGradient grad = nn::ParamGradient::zeros_like(net);
  nn::Network::TangentCache cache;
  RowVector value, tangent;
  Matrix in(inputs.rows(), batch);
  RowVector tg(batch);
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), engine);
    for (int k = 0; k < batches; ++k) {
      for (int j = 0; j < batch; ++j) {
        in.col(j) = inputs.col(order[static_cast<std::size_t>(k) * batch + j]);
        tg(j) = targets(order[static_cast<std::size_t>(k) * batch + j]);
      }
      net.forward_tangent(in, Matrix::Zero(in.rows(), batch), cache, value, tangent);
      grad.set_zero();
      net.backward_tangent(cache, (2.0 / batch) * (value - tg), RowVector::Zero(batch), grad);
      nn::train_step(net, grad, train, state);
    }
  }
  const RowVector fit = net.forward_batch(inputs);
  return std::sqrt((fit - targets).squaredNorm() / n);
}

}  // namespace

UpdateResult update_sigma(const Problem& problem, const DiffusionField& sigma,
                          const Direction& direction, double alpha, double clip,
                          SigmaRepresentation representation, const RefitConfig& refit,
                          std::uint64_t seed) {
  const Cloud& cloud = direction.cloud;
  if (cloud.size() == 0) throw ConfigError("update needs a nonempty cloud");
  const auto entries = sigma.free_entries();
  const int n = static_cast<int>(cloud.size());
  const int dim = sigma.dim();

  // Projected targets for each free entry.
  Matrix targets(static_cast<Eigen::Index>(entries.size()), n);
  parallel_for(cloud.size(), [&](std::size_t i) {
    const Vector x = cloud.x.col(static_cast<Eigen::Index>(i));
    const Matrix step = direction.ell[i].cwiseMax(-clip).cwiseMin(clip);
    const Matrix raw = sigma(cloud.t[i], x) - alpha * step;
    const Matrix proj = problem.project(raw, cloud.t[i], x);
    for (std::size_t k = 0; k < entries.size(); ++k) {
      targets(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          proj(entries[k].first, entries[k].second);
    }
  });

  UpdateResult out;
  if (entries.empty()) {
    out.sigma = sigma;
    return out;
  }
  Matrix base = sigma.kind() == DiffusionField::Kind::Function
                    ? problem.project(Matrix::Identity(dim, dim), 0.0, Vector::Zero(dim))
                    : sigma.base();

  if (representation == SigmaRepresentation::Constant) {
    double sq = 0.0;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto row = targets.row(static_cast<Eigen::Index>(k));
      const double mean = row.mean();
      base(entries[k].first, entries[k].second) = mean;
      sq += (row.array() - mean).square().sum();
    }
    out.sigma = DiffusionField::constant(base, sigma.mask(), sigma.projection());
    out.residual = std::sqrt(sq / (static_cast<double>(n) * entries.size()));
    return out;
  }

  Matrix inputs(dim + 1, n);
  for (int i = 0; i < n; ++i) {
    inputs(0, i) = cloud.t[i];
    inputs.col(i).tail(dim) = cloud.x.col(i);
  }
  std::vector<nn::Network> nets;
  double sq = 0.0;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    nn::Network net;
    if (sigma.kind() == DiffusionField::Kind::Network) {
      net = sigma.networks()[k];
    } else {
      std::vector<int> widths{dim + 1};
      widths.insert(widths.end(), refit.hidden.begin(), refit.hidden.end());
      widths.push_back(1);
      net = nn::Network::random(widths, nn::Activation::Tanh, seed + 31 * k + 1);
    }
    const double rms = fit_network(net, inputs, targets.row(static_cast<Eigen::Index>(k)),
                                   refit.train, seed + k);
    sq += rms * rms;
    nets.push_back(std::move(net));
  }
  out.residual = std::sqrt(sq / entries.size());
  if (!(out.residual <= refit.tolerance)) {
    throw RefitError("sigma refit residual " + std::to_string(out.residual) +
                         " exceeds tolerance " + std::to_string(refit.tolerance),
                     out.residual);
  }
  out.sigma = DiffusionField::network(base, sigma.mask(), std::move(nets), sigma.projection());
  return out;
}

InnerResult DeepBsdeSolver::solve(const Problem& problem, const DiffusionField& sigma,
                                  int iteration, std::uint64_t seed) {
  const bsde::SemilinearSpec spec = bsde::from_problem(problem, sigma, drifted_);
  const bsde::Networks* warm = warm_start_ && last_ ? &*last_ : nullptr;
  bsde::SolveResult r = bsde::train_semilinear(spec, config_, seed + 1000003ULL * iteration, warm);
  last_ = r.nets;
  InnerResult out;
  out.field = r.field;
  out.loss_history = std::move(r.loss_history);
  out.final_loss = r.final_loss;
  out.nets = std::move(r.nets);
  return out;
}

InnerResult OracleSolver::solve(const Problem& problem, const DiffusionField& sigma, int,
                                std::uint64_t) {
  InnerResult out;
  out.field = problem.semilinear_oracle(sigma);
  return out;
}

RunReport run_ascent(const Problem& problem, const AscentConfig& config, InnerSolver& solver,
                     std::uint64_t seed, const DiffusionField* sigma0, const IterationHook& hook) {
  config.validate(problem.dim());
  RunReport report;
  report.seed = seed;
  DiffusionField sigma = sigma0 ? *sigma0 : problem.constant_field(config.sigma0);

  FieldPtr oracle;
  try {
    oracle = problem.oracle();
  } catch (const NoOracleError&) {
  }
  const residual::TestPoints test = residual::uniform_points(
      problem.horizon(), config.region_lo, config.region_hi, config.test_points, seed ^ 0x7e57ULL);

  for (int m = 1; m <= config.max_iterations; ++m) {
    const auto start = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.m = m;
    InnerResult inner;
    try {
      inner = solver.solve(problem, sigma, m, seed);
      const Cloud cloud = residual::uniform_points(problem.horizon(), config.region_lo,
                                                   config.region_hi, config.cloud_size,
                                                   seed + 7919ULL * m);
      const Direction dir = compute_direction(problem, *inner.field, sigma, cloud, config.norm_order);
      rec.norm = dir.norm;
      rec.loss = inner.final_loss;
      if (oracle) {
        const auto mse = residual::mse_report(*inner.field, *oracle, test);
        rec.mse = mse.mse;
        rec.std = mse.std;
      }
      if (config.probe) rec.probe_value = inner.field->value(0.0, *config.probe);

      const bool done = rec.norm <= config.tolerance || m == config.max_iterations;
      if (done) {
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.iterations.push_back(rec);
        if (hook) hook(rec, sigma, inner);
        report.sigma = sigma;
        report.field = inner.field;
        report.termination =
            rec.norm <= config.tolerance ? Termination::Converged : Termination::MaxIterations;
        return report;
      }
      const UpdateResult up = update_sigma(problem, sigma, dir, config.step(m - 1),
                                           config.clip(m - 1), config.representation,
                                           config.refit, seed + 104729ULL * m);
      rec.refit_residual = up.residual;
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      report.iterations.push_back(rec);
      if (hook) hook(rec, sigma, inner);
      report.sigma = sigma;
      report.field = inner.field;
      sigma = up.sigma;
    } catch (const Error& e) {
      report.termination = Termination::Failed;
      report.failure = "iteration " + std::to_string(m) + ": " + e.what();
      if (!report.field) {
        report.sigma = sigma;
      }
      throw AscentFailure(report.failure, report);
    }
  }
  return report;  // unreachable: the loop returns at max_iterations
}

FkEstimate fk_directional_derivative(
    const Problem& problem, const FieldEstimate& field, const DiffusionField& sigma,
    const std::function<Matrix(double, const Vector&)>& varsigma, double t, const Vector& x,
    int n_paths, std::uint64_t seed, int steps) {
  if (n_paths < 1) throw ConfigError("need at least one path");
  if (steps < 1) throw ConfigError("need at least one step");
  const double T = problem.horizon();
  const double dt = (T - t) / steps;
  const double sqrt_dt = std::sqrt(std::max(dt, 0.0));
  const Eigen::Index d = x.size();
  std::vector<double> samples(n_paths, 0.0);
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
    std::mt19937_64 engine = sde::path_engine(seed, p);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector state = x;
    Vector db(d);
    double discount = 0.0;
    double acc = 0.0;
    for (int n = 0; n < steps; ++n) {
      const double s = t + n * dt;
      const Matrix sg = sigma(s, state);
      const LinearCoeffs c = linearization_coeffs(problem, field.eval(s, state), sg, s, state);
      const double source = -(c.ell.cwiseProduct(varsigma(s, state))).sum();
      acc += std::exp(-discount) * source * dt;
      discount += c.k * dt;
      for (Eigen::Index i = 0; i < d; ++i) db(i) = sqrt_dt * normal(engine);
      state = sde::euler_step(state, c.mu, sg.transpose(), db, dt);
      if (!state.allFinite()) {
        throw BlowupError("FK path blow-up at step " + std::to_string(n + 1), n + 1,
                          static_cast<int>(p));
      }
    }
    samples[p] = acc;
  });
  FkEstimate out;
  for (double s : samples) out.estimate += s;
  out.estimate /= n_paths;
  double var = 0.0;
  for (double s : samples) var += (s - out.estimate) * (s - out.estimate);
  var = n_paths > 1 ? var / (n_paths - 1) : 0.0;
  out.standard_error = std::sqrt(var / n_paths);
  return out;
}

}  // namespace fnascent::ascent
