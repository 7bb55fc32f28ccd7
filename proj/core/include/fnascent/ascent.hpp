#pragma once

#include "fnascent/approximator.hpp"
#include "fnascent/bsde.hpp"
#include "fnascent/common.hpp"
#include "fnascent/field.hpp"
#include "fnascent/problems.hpp"
#include "fnascent/residual.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

// Gradient ascent over the diffusion coefficient:
//   solve v(.; sigma_m), ell_m = df/dsigma - sigma_m D2v,
//   sigma_{m+1} = Proj_{D_f}(sigma_m - alpha_m clip(ell_m, +-b_m)),
// stopped once the empirical norm B_m of ell_m drops to the tolerance.
namespace fnascent::ascent {

enum class SigmaRepresentation {
  /// One number per free entry; refit is the least-squares constant (cloud mean).
  Constant,
  /// One network per free entry, least-squares fitted on the cloud.
  Network,
};

std::string to_string(SigmaRepresentation r);
SigmaRepresentation representation_from_string(const std::string& name);

struct RefitConfig {
  nn::TrainConfig train{5e-3, 200, 256};
  std::vector<int> hidden{16, 16};
  double tolerance = 0.05;  // gate on the RMS fit residual over the cloud
};

struct AscentConfig {
  double tolerance = 1e-3;
  int max_iterations = 15;
  double step0 = 0.5;  // alpha_m = step0 / (1 + m / 10)
  double clip0 = 1.0;  // b_m = clip0
  double norm_order = 1.0;  // infinity allowed
  int cloud_size = 4096;
  Vector region_lo;  // cloud and test points: [0, T] x [region_lo, region_hi]
  Vector region_hi;
  int test_points = 1000;
  SigmaRepresentation representation = SigmaRepresentation::Network;
  RefitConfig refit;
  double sigma0 = 1.0;  // initial value of the free entries
  std::optional<Vector> probe;  // v(0, probe) recorded each iteration

  double step(int m) const { return step0 / (1.0 + m / 10.0); }
  double clip(int) const { return clip0; }
  /// Throws ConfigError.
  void validate(int dim) const;
};

/// Sample of space-time points for norm estimation and refitting.
using Cloud = residual::TestPoints;

struct Direction {
  Cloud cloud;
  std::vector<Matrix> ell;  // masked ell at each cloud point
  double norm = 0.0;        // B_m
};

class DirectionError : public Error {
 public:
  using Error::Error;
};

/// (mean_i sum_free |ell_i|^p)^(1/p); p = infinity gives the max.
double direction_norm(const std::vector<Matrix>& ell, double order);

/// Throws DirectionError when ell is not finite at some cloud point.
Direction compute_direction(const Problem& problem, const FieldEstimate& field,
                            const DiffusionField& sigma, const Cloud& cloud, double norm_order);

class RefitError : public Error {
 public:
  RefitError(const std::string& what, double residual) : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

struct UpdateResult {
  DiffusionField sigma;
  double residual = 0.0;  // RMS of fit minus target over the cloud
};

UpdateResult update_sigma(const Problem& problem, const DiffusionField& sigma,
                          const Direction& direction, double alpha, double clip,
                          SigmaRepresentation representation, const RefitConfig& refit,
                          std::uint64_t seed);

struct InnerResult {
  FieldPtr field;
  std::vector<double> loss_history;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  std::optional<bsde::Networks> nets;
};

class InnerSolver {
 public:
  virtual ~InnerSolver() = default;
  virtual InnerResult solve(const Problem& problem, const DiffusionField& sigma, int iteration,
                            std::uint64_t seed) = 0;
};

/// Trains a fresh field each iteration, warm-started from the previous one.
class DeepBsdeSolver final : public InnerSolver {
 public:
  DeepBsdeSolver(bsde::SolverConfig config, bool drifted = false, bool warm_start = true)
      : config_(std::move(config)), drifted_(drifted), warm_start_(warm_start) {}
  InnerResult solve(const Problem& problem, const DiffusionField& sigma, int iteration,
                    std::uint64_t seed) override;

 private:
  bsde::SolverConfig config_;
  bool drifted_;
  bool warm_start_;
  std::optional<bsde::Networks> last_;
};

/// Uses the problem's semilinear closed form.
class OracleSolver final : public InnerSolver {
 public:
  InnerResult solve(const Problem& problem, const DiffusionField& sigma, int iteration,
                    std::uint64_t seed) override;
};

struct IterationRecord {
  int m = 0;
  double norm = 0.0;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
  double loss = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  double refit_residual = std::numeric_limits<double>::quiet_NaN();
  double probe_value = std::numeric_limits<double>::quiet_NaN();
};

enum class Termination { Converged, MaxIterations, Failed };
std::string to_string(Termination t);

struct RunReport {
  DiffusionField sigma;  // final sigma_hat
  FieldPtr field;        // v_hat(.; sigma_hat)
  std::vector<IterationRecord> iterations;
  Termination termination = Termination::Failed;
  std::string failure;
  std::uint64_t seed = 0;

  std::vector<double> norms() const;
};

class AscentFailure : public Error {
 public:
  AscentFailure(const std::string& what, RunReport partial)
      : Error(what), partial_(std::move(partial)) {}
  const RunReport& partial() const { return partial_; }

 private:
  RunReport partial_;
};

/// Called after each iteration with the record, the sigma that was solved,
/// and the inner result.
using IterationHook =
    std::function<void(const IterationRecord&, const DiffusionField&, const InnerResult&)>;

/// Iteration m (from 1) solves under sigma_{m-1} and records B_m. Stops when
/// B_m <= tolerance or m = max_iterations; the returned sigma is the one the
/// returned field was solved under. Inner or direction failures throw
/// AscentFailure carrying the partial report.
RunReport run_ascent(const Problem& problem, const AscentConfig& config, InnerSolver& solver,
                     std::uint64_t seed, const DiffusionField* sigma0 = nullptr,
                     const IterationHook& hook = {});

struct FkEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo E[ sum_n exp(-sum_{j<n} k dt) (-ell : varsigma)(s_n, X_n) dt ] along
/// dX = mu dt + sigma^T dB started at (t, x), with `steps` Euler steps on [t, T].
FkEstimate fk_directional_derivative(
    const Problem& problem, const FieldEstimate& field, const DiffusionField& sigma,
    const std::function<Matrix(double, const Vector&)>& varsigma, double t, const Vector& x,
    int n_paths, std::uint64_t seed, int steps = 20);

}  // namespace fnascent::ascent
