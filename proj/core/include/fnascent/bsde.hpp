#pragma once

#include "fnascent/approximator.hpp"
#include "fnascent/common.hpp"
#include "fnascent/field.hpp"
#include "fnascent/problems.hpp"
#include "fnascent/sde.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

// Deep-BSDE solver for
//   -dv/dt - (sigma^T sigma) : D2v / 2 + F(t, x, v, Dv) = 0,  v(T, .) = g.
// Paths follow dX = b dt + sigma^T dB (b = 0 unless drifted); along them
//   Y_{n+1} = Y_n + (F + b . Z_n) dt + Z_n . sigma^T dB_n,  Z_n = grad_x U(t_n, X_n).
namespace fnascent::bsde {

enum class LossVariant {
  /// Single network U; Y_0 = U(0, X_0); loss = mean |Y_N - g(X_N)|^2.
  Plain,
  /// Networks V(x) and U(t, x); Y_0 = V(X_0) and the loss adds
  /// dt * sum_{n=0..N} |Y_n - U(t_n, X_n)|^2 + |V(X_0) - U(0, X_0)|^2.
  Modified,
};

std::string to_string(LossVariant v);
LossVariant loss_variant_from_string(const std::string& name);

/// F(t, x, p, q; sigma(t, x)) with its first derivatives in p and q.
using SourceFn =
    std::function<SourceJet(double t, const Vector& x, double p, const Vector& q, const Matrix& sigma)>;
using TerminalFn = std::function<double(const Vector& x)>;
/// Path drift b(t, x) given sigma(t, x).
using PathDriftFn = std::function<Vector(double t, const Vector& x, const Matrix& sigma)>;

struct SemilinearSpec {
  int dim = 0;
  DiffusionField sigma;
  SourceFn source;
  TerminalFn terminal;
  PathDriftFn drift;  // empty: driftless paths
};

/// F = f(., sigma(t, x)) of `problem`; drifted paths use problem.path_drift.
/// The problem must outlive the returned spec.
SemilinearSpec from_problem(const Problem& problem, DiffusionField sigma, bool drifted = false);

struct SolverConfig {
  sde::GridSpec grid{1.0, 20};
  int sample_size = 4096;
  int batch_size = 256;
  nn::TrainConfig value_train;  // V (modified variant only)
  nn::TrainConfig field_train;  // U; its epoch count drives training
  /// Both learning rates decay geometrically over the epochs of one solve and
  /// reach lr * lr_decay at the last epoch. 1 keeps them constant.
  double lr_decay = 1.0;
  /// Fraction of the final epochs whose iterates are averaged (Polyak) into the
  /// returned networks. 0 returns the last iterate.
  double average_tail = 0.0;
  LossVariant variant = LossVariant::Modified;
  std::optional<double> outlier_quantile;
  Vector x0_lo;  // initial states uniform on [x0_lo, x0_hi]
  Vector x0_hi;
  std::vector<int> hidden;  // empty: default widths
  nn::Activation activation = nn::Activation::Tanh;

  /// Throws ConfigError; requires sample_size >= batch_size >= 1.
  void validate(int dim) const;
};

struct Networks {
  nn::Network value;  // V(x); unused by the plain variant
  nn::Network field;  // U(t, x)

  static Networks initial(int dim, const SolverConfig& config, std::uint64_t seed);
};

/// Y table, one row per time step, one column per path.
Matrix rollout_Y(const SemilinearSpec& spec, const Networks& nets, const sde::PathBatch& batch,
                 LossVariant variant);

double empirical_loss(const SemilinearSpec& spec, const Networks& nets,
                      const sde::PathBatch& batch, LossVariant variant);

struct LossGradient {
  double loss = 0.0;
  nn::ParamGradient value;
  nn::ParamGradient field;
};

/// Loss and its exact parameter gradient. The gradient flows through Z = grad U
/// and through the source term.
LossGradient loss_gradient(const SemilinearSpec& spec, const Networks& nets,
                           const sde::PathBatch& batch, LossVariant variant);

/// Paths for a spec: initial states from the config box, loading sigma^T.
sde::PathBatch simulate_paths(const SemilinearSpec& spec, const SolverConfig& config,
                              int n_paths, std::uint64_t seed);

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

struct SolveResult {
  FieldPtr field;  // NetworkField of U
  Networks nets;
  std::vector<double> loss_history;  // per-epoch mean minibatch loss
  double final_loss = 0.0;           // full-sample loss after training
  int kept_paths = 0;
};

/// Pre-simulates the sample once, then runs shuffled minibatch epochs.
/// `warm_start` seeds the networks (shapes must match the config).
/// Throws TrainingError when the loss stops being finite.
SolveResult train_semilinear(const SemilinearSpec& spec, const SolverConfig& config,
                             std::uint64_t seed, const Networks* warm_start = nullptr);

}  // namespace fnascent::bsde
