#include "fnascent/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace fnascent::bsde {

std::string to_string(LossVariant v) { return v == LossVariant::Plain ? "plain" : "modified"; }

LossVariant loss_variant_from_string(const std::string& name) {
  if (name == "plain") return LossVariant::Plain;
  if (name == "modified") return LossVariant::Modified;
  throw ConfigError("unknown loss variant '" + name + "' (expected plain or modified)");
}

SemilinearSpec from_problem(const Problem& problem, DiffusionField sigma, bool drifted) {
  SemilinearSpec s;
  s.dim = problem.dim();
  s.sigma = std::move(sigma);
  s.source = [&problem](double t, const Vector& x, double p, const Vector& q, const Matrix& sg) {
    return problem.f_jet(t, x, p, q, sg);
  };
  s.terminal = [&problem](const Vector& x) { return problem.terminal(x); };
  if (drifted) {
    s.drift = [&problem](double t, const Vector& x, const Matrix& sg) {
      return problem.path_drift(t, x, sg);
    };
  }
  return s;
}

void SolverConfig::validate(int dim) const {
  grid.validate();
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (sample_size < batch_size) throw ConfigError("sample size must be at least the batch size");
  value_train.validate();
  field_train.validate();
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (!(average_tail >= 0.0 && average_tail < 1.0)) throw ConfigError("average_tail must lie in [0, 1)");
  if (outlier_quantile && !(*outlier_quantile > 0.5 && *outlier_quantile < 1.0)) {
    throw ConfigError("outlier quantile must lie in (0.5, 1)");
  }
  if (x0_lo.size() != dim || x0_hi.size() != dim) {
    throw ConfigError("initial box must have one bound per state component");
  }
  if ((x0_hi.array() < x0_lo.array()).any()) throw ConfigError("initial box is inverted");
  for (int w : hidden) {
    if (w < 1) throw ConfigError("hidden widths must be positive");
  }
}

namespace {

std::vector<int> widths_for(int input, int state_dim, const SolverConfig& config) {
  if (config.hidden.empty()) return nn::Network::default_widths(input, state_dim);
  std::vector<int> w{input};
  w.insert(w.end(), config.hidden.begin(), config.hidden.end());
  w.push_back(1);
  return w;
}

// Per-path quantities that do not depend on the network parameters.
struct Prepared {
  int steps = 0;
  int paths = 0;
  int dim = 0;
  double dt = 0.0;
  std::vector<double> times;
  std::vector<Matrix> states;                // N+1 of dim x paths
  std::vector<Matrix> noise;                 // N of dim x paths: sigma^T dB
  std::vector<Matrix> drift;                 // N of dim x paths, empty if driftless
  std::vector<std::vector<Matrix>> sigma;    // N x paths
  RowVector terminal;                        // g(X_N)
};

Prepared prepare(const SemilinearSpec& spec, const sde::PathBatch& batch) {
  Prepared p;
  p.steps = batch.grid.steps;
  p.paths = batch.paths();
  p.dim = batch.dim();
  if (p.dim != spec.dim) throw ShapeError("path batch dimension differs from the problem dimension");
  p.dt = batch.grid.dt();
  for (int n = 0; n <= p.steps; ++n) p.times.push_back(batch.grid.time(n));
  p.states = batch.states;
  p.noise.assign(p.steps, Matrix(p.dim, p.paths));
  if (spec.drift) p.drift.assign(p.steps, Matrix(p.dim, p.paths));
  p.sigma.assign(p.steps, std::vector<Matrix>(p.paths));
  for (int n = 0; n < p.steps; ++n) {
    for (int b = 0; b < p.paths; ++b) {
      const Vector x = p.states[n].col(b);
      Matrix s = spec.sigma(p.times[n], x);
      p.noise[n].col(b) = s.transpose() * batch.increments[n].col(b);
      if (spec.drift) p.drift[n].col(b) = spec.drift(p.times[n], x, s);
      p.sigma[n][b] = std::move(s);
    }
  }
  p.terminal.resize(p.paths);
  for (int b = 0; b < p.paths; ++b) p.terminal(b) = spec.terminal(p.states[p.steps].col(b));
  return p;
}

Prepared gather(const Prepared& src, const std::vector<int>& cols) {
  Prepared p;
  p.steps = src.steps;
  p.paths = static_cast<int>(cols.size());
  p.dim = src.dim;
  p.dt = src.dt;
  p.times = src.times;
  auto pick = [&](const Matrix& m) {
    Matrix out(m.rows(), p.paths);
    for (int j = 0; j < p.paths; ++j) out.col(j) = m.col(cols[j]);
    return out;
  };
  for (const auto& m : src.states) p.states.push_back(pick(m));
  for (const auto& m : src.noise) p.noise.push_back(pick(m));
  for (const auto& m : src.drift) p.drift.push_back(pick(m));
  p.sigma.resize(src.sigma.size());
  for (std::size_t n = 0; n < src.sigma.size(); ++n) {
    p.sigma[n].reserve(cols.size());
    for (int c : cols) p.sigma[n].push_back(src.sigma[n][c]);
  }
  p.terminal.resize(p.paths);
  for (int j = 0; j < p.paths; ++j) p.terminal(j) = src.terminal(cols[j]);
  return p;
}

// Column n * paths + b holds (t_n, X_n^b).
Matrix field_inputs(const Prepared& p) {
  Matrix in(p.dim + 1, static_cast<Eigen::Index>(p.steps + 1) * p.paths);
  for (int n = 0; n <= p.steps; ++n) {
    auto block = in.middleCols(static_cast<Eigen::Index>(n) * p.paths, p.paths);
    block.row(0).setConstant(p.times[n]);
    block.bottomRows(p.dim) = p.states[n];
  }
  return in;
}

struct Evaluation {
  RowVector u;               // U at every (n, b)
  Matrix z;                  // dim x points: grad_x U
  RowVector v0;              // V(X_0) (modified) or U(0, X_0)
  Matrix y;                  // (N+1) x paths
  std::vector<RowVector> dp;  // N of paths
  std::vector<Matrix> dq;     // N of dim x paths
  double loss = 0.0;
};

Evaluation evaluate(const SemilinearSpec& spec, const Networks& nets, const Prepared& p,
                    LossVariant variant, const Matrix& inputs, bool keep_jets) {
  Evaluation e;
  const Eigen::Index points = inputs.cols();
  e.z.resize(p.dim, points);
  nn::Network::TangentCache cache;
  RowVector tangent;
  for (int k = 0; k < p.dim; ++k) {
    Matrix dir = Matrix::Zero(p.dim + 1, points);
    dir.row(k + 1).setOnes();
    nets.field.forward_tangent(inputs, dir, cache, e.u, tangent);
    e.z.row(k) = tangent;
  }
  if (variant == LossVariant::Modified) {
    e.v0 = nets.value.forward_batch(p.states[0]);
  } else {
    e.v0 = e.u.head(p.paths);
  }

  e.y.resize(p.steps + 1, p.paths);
  e.y.row(0) = e.v0;
  if (keep_jets) {
    e.dp.assign(p.steps, RowVector(p.paths));
    e.dq.assign(p.steps, Matrix(p.dim, p.paths));
  }
  for (int n = 0; n < p.steps; ++n) {
    const auto off = static_cast<Eigen::Index>(n) * p.paths;
    for (int b = 0; b < p.paths; ++b) {
      const Vector x = p.states[n].col(b);
      const Vector q = e.z.col(off + b);
      const double yn = e.y(n, b);
      const SourceJet jet = spec.source(p.times[n], x, yn, q, p.sigma[n][b]);
      double incr = jet.value * p.dt + q.dot(p.noise[n].col(b));
      if (!p.drift.empty()) incr += p.drift[n].col(b).dot(q) * p.dt;
      e.y(n + 1, b) = yn + incr;
      if (keep_jets) {
        e.dp[n](b) = jet.d_p;
        e.dq[n].col(b) = jet.d_q;
      }
    }
    if (!e.y.row(n + 1).allFinite()) {
      Eigen::Index bad = 0;
      for (; bad < p.paths && std::isfinite(e.y(n + 1, bad)); ++bad) {
      }
      throw BlowupError("BSDE rollout is not finite at step " + std::to_string(n + 1), n + 1,
                        static_cast<int>(bad));
    }
  }

  const RowVector terminal_gap = e.y.row(p.steps) - p.terminal;
  double loss = terminal_gap.squaredNorm();
  if (variant == LossVariant::Modified) {
    for (int n = 0; n <= p.steps; ++n) {
      const auto off = static_cast<Eigen::Index>(n) * p.paths;
      loss += p.dt * (e.y.row(n) - e.u.segment(off, p.paths)).squaredNorm();
    }
    loss += (e.v0 - e.u.head(p.paths)).squaredNorm();
  }
  e.loss = loss / p.paths;
  return e;
}

LossGradient gradient(const SemilinearSpec& spec, const Networks& nets, const Prepared& p,
                      LossVariant variant) {
  const Matrix inputs = field_inputs(p);
  const Evaluation e = evaluate(spec, nets, p, variant, inputs, true);
  const Eigen::Index points = inputs.cols();
  const double scale = 1.0 / p.paths;
  const bool modified = variant == LossVariant::Modified;

  RowVector u_seed = RowVector::Zero(points);  // dL/dU_n
  Matrix z_seed = Matrix::Zero(p.dim + 1, points);  // dL/dZ_n, row 0 is time
  auto gap = [&](int n) {
    return RowVector(e.y.row(n) - e.u.segment(static_cast<Eigen::Index>(n) * p.paths, p.paths));
  };

  // a = dL/dY_n (times paths), swept backwards.
  RowVector a = 2.0 * (e.y.row(p.steps) - p.terminal);
  if (modified) {
    const RowVector g = gap(p.steps);
    a += 2.0 * p.dt * g;
    u_seed.segment(static_cast<Eigen::Index>(p.steps) * p.paths, p.paths) = -2.0 * p.dt * g;
  }
  for (int n = p.steps - 1; n >= 0; --n) {
    const auto off = static_cast<Eigen::Index>(n) * p.paths;
    Matrix dz = e.dq[n] * p.dt + p.noise[n];
    if (!p.drift.empty()) dz += p.drift[n] * p.dt;
    z_seed.block(1, off, p.dim, p.paths) = dz * a.asDiagonal();
    a = a.cwiseProduct((1.0 + p.dt * e.dp[n].array()).matrix());
    if (modified) {
      const RowVector g = gap(n);
      a += 2.0 * p.dt * g;
      u_seed.segment(off, p.paths) = -2.0 * p.dt * g;
    }
  }
  // a now holds dL/dY_0.
  RowVector v_seed;
  if (modified) {
    const RowVector tie = e.v0 - e.u.head(p.paths);
    v_seed = a + 2.0 * tie;
    u_seed.head(p.paths) -= 2.0 * tie;
  } else {
    u_seed.head(p.paths) += a;
  }

  LossGradient out;
  out.loss = e.loss;
  out.field = nn::ParamGradient::zeros_like(nets.field);
  nn::Network::TangentCache cache;
  RowVector value, tangent;
  nets.field.forward_tangent(inputs, z_seed, cache, value, tangent);
  nets.field.backward_tangent(cache, u_seed * scale, RowVector::Constant(points, scale), out.field);

  if (modified) {
    out.value = nn::ParamGradient::zeros_like(nets.value);
    nn::Network::TangentCache vcache;
    const Matrix zero = Matrix::Zero(p.dim, p.paths);
    nets.value.forward_tangent(p.states[0], zero, vcache, value, tangent);
    nets.value.backward_tangent(vcache, v_seed * scale, RowVector::Zero(p.paths), out.value);
  }
  return out;
}

}  // namespace

Networks Networks::initial(int dim, const SolverConfig& config, std::uint64_t seed) {
  Networks n;
  n.value = nn::Network::random(widths_for(dim, dim, config), config.activation, seed * 2 + 1);
  n.field = nn::Network::random(widths_for(dim + 1, dim, config), config.activation, seed * 2 + 2);
  return n;
}

Matrix rollout_Y(const SemilinearSpec& spec, const Networks& nets, const sde::PathBatch& batch,
                 LossVariant variant) {
  const Prepared p = prepare(spec, batch);
  return evaluate(spec, nets, p, variant, field_inputs(p), false).y;
}

double empirical_loss(const SemilinearSpec& spec, const Networks& nets,
                      const sde::PathBatch& batch, LossVariant variant) {
  const Prepared p = prepare(spec, batch);
  return evaluate(spec, nets, p, variant, field_inputs(p), false).loss;
}

LossGradient loss_gradient(const SemilinearSpec& spec, const Networks& nets,
                           const sde::PathBatch& batch, LossVariant variant) {
  return gradient(spec, nets, prepare(spec, batch), variant);
}

sde::PathBatch simulate_paths(const SemilinearSpec& spec, const SolverConfig& config, int n_paths,
                              std::uint64_t seed) {
  sde::DriftFn drift;
  if (spec.drift) {
    drift = [&spec](double t, const Vector& x) { return spec.drift(t, x, spec.sigma(t, x)); };
  }
  const sde::LoadingFn loading = [&spec](double t, const Vector& x) {
    return Matrix(spec.sigma(t, x).transpose());
  };
  return sde::simulate(drift, loading, sde::uniform_box(config.x0_lo, config.x0_hi), config.grid,
                       n_paths, seed);
}

namespace {

// avg += (cur - avg) / count, parameter by parameter.
void accumulate(nn::Network& avg, const nn::Network& cur, int count) {
  const double w = 1.0 / count;
  for (std::size_t l = 0; l < avg.layers().size(); ++l) {
    avg.layers()[l].weight += w * (cur.layers()[l].weight - avg.layers()[l].weight);
    avg.layers()[l].bias += w * (cur.layers()[l].bias - avg.layers()[l].bias);
  }
}

}  // namespace

SolveResult train_semilinear(const SemilinearSpec& spec, const SolverConfig& config,
                             std::uint64_t seed, const Networks* warm_start) {
  config.validate(spec.dim);
  if (!spec.source || !spec.terminal) throw ConfigError("semilinear spec needs a source and a terminal");

  sde::PathBatch paths = simulate_paths(spec, config, config.sample_size, seed);
  if (config.outlier_quantile) paths = sde::filter_outliers(paths, *config.outlier_quantile).batch;
  const Prepared all = prepare(spec, paths);

  SolveResult result;
  result.kept_paths = all.paths;
  result.nets = warm_start ? *warm_start : Networks::initial(spec.dim, config, seed);
  if (result.nets.field.input_dim() != spec.dim + 1 || result.nets.value.input_dim() != spec.dim) {
    throw ShapeError("warm-start networks do not match the state dimension");
  }
  auto value_state = nn::OptimizerState::for_network(result.nets.value);
  auto field_state = nn::OptimizerState::for_network(result.nets.field);

  std::mt19937_64 shuffler(seed ^ 0x5deece66dULL);
  std::vector<int> order(all.paths);
  std::iota(order.begin(), order.end(), 0);
  const int batch = std::min(config.batch_size, all.paths);
  const int batches = all.paths / batch;

  const int epochs = config.field_train.epochs;
  nn::TrainConfig value_train = config.value_train;
  nn::TrainConfig field_train = config.field_train;
  // Averaging starts at this epoch; epochs itself disables it.
  const int tail_start =
      config.average_tail > 0.0 ? epochs - std::max(1, static_cast<int>(std::lround(config.average_tail * epochs))) : epochs;
  Networks averaged;
  int averaged_count = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double decay = epochs > 1 ? std::pow(config.lr_decay, static_cast<double>(epoch) / (epochs - 1)) : 1.0;
    value_train.learning_rate = config.value_train.learning_rate * decay;
    field_train.learning_rate = config.field_train.learning_rate * decay;
    std::shuffle(order.begin(), order.end(), shuffler);
    double total = 0.0;
    for (int k = 0; k < batches; ++k) {
      const std::vector<int> cols(order.begin() + static_cast<long>(k) * batch,
                                  order.begin() + static_cast<long>(k + 1) * batch);
      LossGradient g;
      try {
        g = gradient(spec, result.nets, gather(all, cols), config.variant);
      } catch (const BlowupError& err) {
        result.loss_history.push_back(std::numeric_limits<double>::quiet_NaN());
        throw TrainingError(std::string("training diverged: ") + err.what(), result.loss_history);
      }
      if (!std::isfinite(g.loss) || !g.field.all_finite() ||
          (config.variant == LossVariant::Modified && !g.value.all_finite())) {
        result.loss_history.push_back(g.loss);
        throw TrainingError("training loss is not finite at epoch " + std::to_string(epoch),
                            result.loss_history);
      }
      total += g.loss;
      nn::train_step(result.nets.field, g.field, field_train, field_state);
      if (config.variant == LossVariant::Modified) {
        nn::train_step(result.nets.value, g.value, value_train, value_state);
      }
      if (epoch >= tail_start) {
        if (averaged_count++ == 0) {
          averaged = result.nets;
        } else {
          accumulate(averaged.field, result.nets.field, averaged_count);
          accumulate(averaged.value, result.nets.value, averaged_count);
        }
      }
    }
    result.loss_history.push_back(total / batches);
  }
  if (averaged_count > 0) result.nets = std::move(averaged);
  result.final_loss = evaluate(spec, result.nets, all, config.variant, field_inputs(all), false).loss;
  result.field = std::make_shared<NetworkField>(result.nets.field);
  return result;
}

}  // namespace fnascent::bsde
