#pragma once

#include "fnascent/common.hpp"
#include "fnascent/field.hpp"

#include <memory>
#include <string>
#include <vector>

namespace fnascent {

/// Real value or the +infinity sentinel used outside D_h. Never a large float.
struct ExtendedReal {
  double value = 0.0;
  bool infinite = false;

  static ExtendedReal finite(double v) { return {v, false}; }
  static ExtendedReal plus_infinity() { return {0.0, true}; }
  bool is_finite() const { return !infinite; }
};

/// First-order data of f at one point; what the BSDE rollout and its adjoint need.
struct SourceJet {
  double value = 0.0;
  double d_p = 0.0;
  Vector d_q;
};

/// Coefficients of the linear PDE solved by the directional derivative of
/// v(.; sigma) in sigma: k = df/dp, mu = -df/dq, ell = df/dsigma - sigma D2v.
/// `ell` is restricted to the free entries of D_f (the directions sigma can
/// move in); `ell_full` keeps every entry.
struct LinearCoeffs {
  double k = 0.0;
  Vector mu;
  Matrix ell;
  Matrix ell_full;
};

/// A fully nonlinear, convex, parabolic terminal-value problem
///   -dv/dt - h(t, x, v, Dv, D2v) = 0,  v(T, .) = g,
/// together with the Legendre-Fenchel transform f of h in the Hessian slot.
/// All methods are pure.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual double horizon() const = 0;

  virtual ExtendedReal h(double t, const Vector& x, double p, const Vector& q,
                         const Matrix& gamma) const = 0;
  /// Throws DomainError when sigma is outside D_f.
  virtual double f(double t, const Vector& x, double p, const Vector& q,
                   const Matrix& sigma) const = 0;
  virtual SourceJet f_jet(double t, const Vector& x, double p, const Vector& q,
                          const Matrix& sigma) const = 0;
  virtual Matrix df_dsigma(double t, const Vector& x, double p, const Vector& q,
                           const Matrix& sigma) const = 0;
  virtual double terminal(const Vector& x) const = 0;

  virtual bool in_domain(const Matrix& sigma) const = 0;
  /// Idempotent map into D_f. Throws ConfigError if D_f is empty.
  virtual Matrix project(const Matrix& raw, double t, const Vector& x) const = 0;
  virtual Mask free_mask() const = 0;

  /// Drift of the forward paths for the drifted variant, given sigma(t, x).
  /// Defaults to zero. The rollout compensates with the drift . Z term.
  virtual Vector path_drift(double t, const Vector& x, const Matrix& sigma) const;

  /// Closed-form solution of the fully nonlinear problem. Throws NoOracleError.
  virtual FieldPtr oracle() const;
  /// Maximiser sigma*(t, x) for the oracle. Throws NoOracleError.
  virtual Matrix optimal_sigma(double t, const Vector& x) const;
  /// Closed-form solution of the semilinear problem for a given sigma
  /// (typically only for constant sigma). Throws NoOracleError.
  virtual FieldPtr semilinear_oracle(const DiffusionField& sigma) const;

  /// A constant diffusion field in D_f whose free entries equal `value`.
  DiffusionField constant_field(double value) const;
  /// sigma* as a diffusion field (free entries from optimal_sigma).
  DiffusionField optimal_field() const;
  DiffusionField::Projection projector() const;

 protected:
  void check_sigma_shape(const Matrix& sigma) const;
};

using ProblemPtr = std::shared_ptr<const Problem>;

/// Merton portfolio problem on wealth alone:
///   h(q, gamma) = -Lambda^2 q^2 / (2 gamma) for gamma < 0, +inf otherwise,
///   f(q, sigma) = -Lambda |q| |sigma|, g(w) = 1 - exp(-eta w).
/// Lambda is the Euclidean norm of the premium vector (the reduction of the
/// stochastic-volatility model with constant premia).
class MertonProblem final : public Problem {
 public:
  MertonProblem(std::vector<double> lambda, double eta, double horizon);

  std::string name() const override { return "merton"; }
  int dim() const override { return 1; }
  double horizon() const override { return horizon_; }
  double premium_norm() const { return Lambda_; }
  double eta() const { return eta_; }

  ExtendedReal h(double t, const Vector& x, double p, const Vector& q,
                 const Matrix& gamma) const override;
  double f(double t, const Vector& x, double p, const Vector& q,
           const Matrix& sigma) const override;
  SourceJet f_jet(double t, const Vector& x, double p, const Vector& q,
                  const Matrix& sigma) const override;
  Matrix df_dsigma(double t, const Vector& x, double p, const Vector& q,
                   const Matrix& sigma) const override;
  double terminal(const Vector& x) const override;
  bool in_domain(const Matrix& sigma) const override;
  Matrix project(const Matrix& raw, double t, const Vector& x) const override;
  Mask free_mask() const override;
  Vector path_drift(double t, const Vector& x, const Matrix& sigma) const override;
  FieldPtr oracle() const override;
  Matrix optimal_sigma(double t, const Vector& x) const override;
  FieldPtr semilinear_oracle(const DiffusionField& sigma) const override;

  /// alpha(sigma) = sigma^2 eta^2 / 2 - Lambda |sigma| eta.
  double exponent_rate(double sigma) const;
  /// 1 - exp(-eta w + rate * (T - t)) and its derivatives.
  FieldValue exponential_solution(double rate, double t, double w) const;

 private:
  double Lambda_;
  double eta_;
  double horizon_;
};

enum class PremiumKind { Linear, Constant };

struct StochVolParams {
  std::vector<double> lambda;
  std::vector<double> kappa;
  std::vector<double> theta;
  std::vector<double> nu;
  double eta = 1.0;
  double horizon = 1.0;
  PremiumKind premium = PremiumKind::Linear;

  int assets() const { return static_cast<int>(lambda.size()); }
  void validate() const;
};

/// phi_i, psi_i, chi_i of the exponential-quadratic ansatz, tabulated on the
/// requested time-to-maturity grid.
struct RiccatiTables {
  std::vector<double> tau;
  // [grid index][asset]
  std::vector<std::vector<double>> phi;
  std::vector<std::vector<double>> psi;
  std::vector<std::vector<double>> chi;
};

/// Integrates the ODE system obtained by substituting
///   v = 1 - exp(-eta w - sum_i (phi_i y_i^2 + psi_i y_i + chi_i))
/// into the HJB with classical RK4 (step at most max(tau)/2000). Throws
/// BlowupError carrying the blow-up time in its message.
RiccatiTables riccati_solve(const StochVolParams& params, const std::vector<double>& tau);

/// Portfolio choice under OU stochastic volatility without leverage. State
/// x = (w, y_1..y_d). Terms of the generator of Y are folded into h so that h
/// stays the exact conjugate of
///   f = -sum kappa_i (theta_i - y_i) q_i - |q_0| |sigma_00| Lambda(y),
/// with D_f = { diag(sigma_00, nu_1, ..., nu_d) }.
class StochVolProblem final : public Problem {
 public:
  explicit StochVolProblem(StochVolParams params);

  std::string name() const override { return "stochvol"; }
  int dim() const override { return params_.assets() + 1; }
  double horizon() const override { return params_.horizon; }
  const StochVolParams& params() const { return params_; }

  double premium_norm(const Vector& x) const;

  ExtendedReal h(double t, const Vector& x, double p, const Vector& q,
                 const Matrix& gamma) const override;
  double f(double t, const Vector& x, double p, const Vector& q,
           const Matrix& sigma) const override;
  SourceJet f_jet(double t, const Vector& x, double p, const Vector& q,
                  const Matrix& sigma) const override;
  Matrix df_dsigma(double t, const Vector& x, double p, const Vector& q,
                   const Matrix& sigma) const override;
  double terminal(const Vector& x) const override;
  bool in_domain(const Matrix& sigma) const override;
  Matrix project(const Matrix& raw, double t, const Vector& x) const override;
  Mask free_mask() const override;
  Vector path_drift(double t, const Vector& x, const Matrix& sigma) const override;
  FieldPtr oracle() const override;
  Matrix optimal_sigma(double t, const Vector& x) const override;
  FieldPtr semilinear_oracle(const DiffusionField& sigma) const override;

 private:
  StochVolParams params_;
  RiccatiTables table_;  // dense grid over [0, T] for the oracle
  std::vector<std::vector<double>> dphi_, dpsi_, dchi_;
};

/// Stochastic volatility with leverage rho != 0. Exposes f, its derivatives,
/// and the projection onto D_f (first-row entries |sigma_0i| <= |rho_i nu_i|,
/// sigma_0i^2 + sigma_ii^2 = nu_i^2, others zero). No oracle.
class LeveragedStochVolProblem final : public Problem {
 public:
  LeveragedStochVolProblem(StochVolParams params, std::vector<double> rho);

  std::string name() const override { return "stochvol-leverage"; }
  int dim() const override { return params_.assets() + 1; }
  double horizon() const override { return params_.horizon; }

  ExtendedReal h(double t, const Vector& x, double p, const Vector& q,
                 const Matrix& gamma) const override;
  double f(double t, const Vector& x, double p, const Vector& q,
           const Matrix& sigma) const override;
  SourceJet f_jet(double t, const Vector& x, double p, const Vector& q,
                  const Matrix& sigma) const override;
  Matrix df_dsigma(double t, const Vector& x, double p, const Vector& q,
                   const Matrix& sigma) const override;
  double terminal(const Vector& x) const override;
  bool in_domain(const Matrix& sigma) const override;
  Matrix project(const Matrix& raw, double t, const Vector& x) const override;
  Mask free_mask() const override;

 private:
  double premium(int i, double y) const;
  StochVolParams params_;
  std::vector<double> rho_;
};

/// Heat problem: h(gamma) = s^2 tr(gamma) / 2, D_f = { s I }, f = 0 on D_f,
/// g(x) = |x|^2, with v(t, x) = |x|^2 + d s^2 (T - t).
class HeatProblem final : public Problem {
 public:
  HeatProblem(int dim, double diffusion, double horizon);

  std::string name() const override { return "heat"; }
  int dim() const override { return dim_; }
  double horizon() const override { return horizon_; }
  double diffusion() const { return s_; }

  ExtendedReal h(double t, const Vector& x, double p, const Vector& q,
                 const Matrix& gamma) const override;
  double f(double t, const Vector& x, double p, const Vector& q,
           const Matrix& sigma) const override;
  SourceJet f_jet(double t, const Vector& x, double p, const Vector& q,
                  const Matrix& sigma) const override;
  Matrix df_dsigma(double t, const Vector& x, double p, const Vector& q,
                   const Matrix& sigma) const override;
  double terminal(const Vector& x) const override;
  bool in_domain(const Matrix& sigma) const override;
  Matrix project(const Matrix& raw, double t, const Vector& x) const override;
  Mask free_mask() const override;
  FieldPtr oracle() const override;
  Matrix optimal_sigma(double t, const Vector& x) const override;
  FieldPtr semilinear_oracle(const DiffusionField& sigma) const override;

 private:
  int dim_;
  double s_;
  double horizon_;
};

/// LinearCoeffs at (t, x) from the field's value and derivatives.
/// Throws NonFiniteError if the field derivatives are not finite.
LinearCoeffs linearization_coeffs(const Problem& problem, const FieldValue& field,
                                  const Matrix& sigma, double t, const Vector& x);

LinearCoeffs linearization_coeffs(const Problem& problem, const FieldEstimate& field,
                                  const DiffusionField& sigma, double t, const Vector& x);

/// (sigma^T sigma) : gamma / 2 -- the second-order term of the semilinear operator.
double diffusion_term(const Matrix& sigma, const Matrix& gamma);

}  // namespace fnascent
