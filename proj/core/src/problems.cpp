#include "fnascent/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fnascent {

namespace {

// Sign with sgn(0) = +1: at sigma = 0 the one-sided derivative toward the
// nonnegative representative is used.
double sign_plus(double s) { return s < 0.0 ? -1.0 : 1.0; }

double sign0(double s) { return s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0); }

void check_finite(const FieldValue& fv) {
  if (!std::isfinite(fv.value) || !fv.grad.allFinite() || !fv.hess.allFinite()) {
    throw NonFiniteError("field value or derivatives are not finite");
  }
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(b)); }

}  // namespace

double diffusion_term(const Matrix& sigma, const Matrix& gamma) {
  return 0.5 * (sigma.transpose() * sigma).cwiseProduct(gamma).sum();
}

// --- Problem --------------------------------------------------------------

Vector Problem::path_drift(double, const Vector&, const Matrix&) const {
  return Vector::Zero(dim());
}

FieldPtr Problem::oracle() const { throw NoOracleError("no closed form for problem " + name()); }

Matrix Problem::optimal_sigma(double, const Vector&) const {
  throw NoOracleError("no optimal diffusion known for problem " + name());
}

FieldPtr Problem::semilinear_oracle(const DiffusionField&) const {
  throw NoOracleError("no semilinear closed form for problem " + name());
}

void Problem::check_sigma_shape(const Matrix& sigma) const {
  if (sigma.rows() != dim() || sigma.cols() != dim()) {
    throw ShapeError("diffusion matrix must be " + std::to_string(dim()) + "x" +
                     std::to_string(dim()));
  }
}

DiffusionField::Projection Problem::projector() const {
  return [this](const Matrix& raw, double t, const Vector& x) { return project(raw, t, x); };
}

DiffusionField Problem::constant_field(double value) const {
  const Matrix raw = value * Matrix::Identity(dim(), dim());
  return DiffusionField::constant(project(raw, 0.0, Vector::Zero(dim())), free_mask(), projector());
}

DiffusionField Problem::optimal_field() const {
  return DiffusionField::function([this](double t, const Vector& x) { return optimal_sigma(t, x); },
                                  free_mask(), projector());
}

// --- Linearization --------------------------------------------------------

LinearCoeffs linearization_coeffs(const Problem& problem, const FieldValue& field,
                                  const Matrix& sigma, double t, const Vector& x) {
  check_finite(field);
  const SourceJet jet = problem.f_jet(t, x, field.value, field.grad, sigma);
  LinearCoeffs c;
  c.k = jet.d_p;
  c.mu = -jet.d_q;
  c.ell_full = problem.df_dsigma(t, x, field.value, field.grad, sigma) - sigma * field.hess;
  const Mask mask = problem.free_mask();
  c.ell = Matrix::Zero(c.ell_full.rows(), c.ell_full.cols());
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      if (mask(i, j)) c.ell(i, j) = c.ell_full(i, j);
    }
  }
  if (!std::isfinite(c.k) || !c.mu.allFinite() || !c.ell_full.allFinite()) {
    throw NonFiniteError("linearization coefficients are not finite");
  }
  return c;
}

LinearCoeffs linearization_coeffs(const Problem& problem, const FieldEstimate& field,
                                  const DiffusionField& sigma, double t, const Vector& x) {
  return linearization_coeffs(problem, field.eval(t, x), sigma(t, x), t, x);
}

// --- Merton ---------------------------------------------------------------

MertonProblem::MertonProblem(std::vector<double> lambda, double eta, double horizon)
    : eta_(eta), horizon_(horizon) {
  if (lambda.empty()) throw ConfigError("merton: premium vector is empty");
  if (!(eta > 0.0)) throw ConfigError("merton: eta must be positive");
  if (!(horizon > 0.0)) throw ConfigError("merton: horizon must be positive");
  Lambda_ = std::sqrt(std::inner_product(lambda.begin(), lambda.end(), lambda.begin(), 0.0));
}

ExtendedReal MertonProblem::h(double, const Vector&, double, const Vector& q,
                              const Matrix& gamma) const {
  const double g = gamma(0, 0);
  if (!(g < 0.0)) return ExtendedReal::plus_infinity();
  return ExtendedReal::finite(-Lambda_ * Lambda_ * q(0) * q(0) / (2.0 * g));
}

double MertonProblem::f(double, const Vector&, double, const Vector& q, const Matrix& sigma) const {
  check_sigma_shape(sigma);
  if (!in_domain(sigma)) throw DomainError("merton: sigma outside the domain of f");
  return -Lambda_ * std::abs(q(0)) * std::abs(sigma(0, 0));
}

SourceJet MertonProblem::f_jet(double t, const Vector& x, double p, const Vector& q,
                               const Matrix& sigma) const {
  SourceJet j;
  j.value = f(t, x, p, q, sigma);
  j.d_q = Vector::Constant(1, -Lambda_ * std::abs(sigma(0, 0)) * sign0(q(0)));
  return j;
}

Matrix MertonProblem::df_dsigma(double, const Vector&, double, const Vector& q,
                                const Matrix& sigma) const {
  check_sigma_shape(sigma);
  return Matrix::Constant(1, 1, -Lambda_ * std::abs(q(0)) * sign_plus(sigma(0, 0)));
}

double MertonProblem::terminal(const Vector& x) const { return 1.0 - std::exp(-eta_ * x(0)); }

bool MertonProblem::in_domain(const Matrix& sigma) const {
  return sigma.rows() == 1 && sigma.cols() == 1 && std::isfinite(sigma(0, 0));
}

Matrix MertonProblem::project(const Matrix& raw, double, const Vector&) const {
  check_sigma_shape(raw);
  return raw.cwiseAbs();
}

Mask MertonProblem::free_mask() const { return Mask::Constant(1, 1, true); }

Vector MertonProblem::path_drift(double, const Vector&, const Matrix& sigma) const {
  // sgn(v_w) = +1 for an increasing utility.
  return Vector::Constant(1, Lambda_ * std::abs(sigma(0, 0)));
}

double MertonProblem::exponent_rate(double sigma) const {
  return 0.5 * sigma * sigma * eta_ * eta_ - Lambda_ * std::abs(sigma) * eta_;
}

FieldValue MertonProblem::exponential_solution(double rate, double t, double w) const {
  const double e = std::exp(-eta_ * w + rate * (horizon_ - t));
  FieldValue fv;
  fv.value = 1.0 - e;
  fv.grad = Vector::Constant(1, eta_ * e);
  fv.hess = Matrix::Constant(1, 1, -eta_ * eta_ * e);
  fv.dt = rate * e;
  return fv;
}

FieldPtr MertonProblem::oracle() const {
  const double rate = -0.5 * Lambda_ * Lambda_;
  return std::make_shared<FunctionField>(
      1, [this, rate](double t, const Vector& x) { return exponential_solution(rate, t, x(0)); });
}

Matrix MertonProblem::optimal_sigma(double, const Vector&) const {
  return Matrix::Constant(1, 1, Lambda_ / eta_);
}

FieldPtr MertonProblem::semilinear_oracle(const DiffusionField& sigma) const {
  if (sigma.kind() != DiffusionField::Kind::Constant) {
    throw NoOracleError("merton: semilinear closed form needs a constant sigma");
  }
  const double rate = exponent_rate(sigma(0.0, Vector::Zero(1))(0, 0));
  return std::make_shared<FunctionField>(
      1, [this, rate](double t, const Vector& x) { return exponential_solution(rate, t, x(0)); });
}

// --- Stochastic volatility -----------------------------------------------

void StochVolParams::validate() const {
  const auto d = lambda.size();
  if (d == 0) throw ConfigError("stochvol: at least one asset is required");
  if (kappa.size() != d || theta.size() != d || nu.size() != d) {
    throw ConfigError("stochvol: lambda, kappa, theta, nu must have equal length");
  }
  for (double n : nu) {
    if (!(n >= 0.0)) throw ConfigError("stochvol: nu must be nonnegative");
  }
  if (!(eta > 0.0)) throw ConfigError("stochvol: eta must be positive");
  if (!(horizon > 0.0)) throw ConfigError("stochvol: horizon must be positive");
}

namespace {

struct RiccatiState {
  double phi, psi, chi;
};

struct RiccatiCoeffs {
  double kappa, theta, nu2, a, c;

  RiccatiState rhs(const RiccatiState& s) const {
    return {-2.0 * kappa * s.phi - 2.0 * nu2 * s.phi * s.phi + 0.5 * a * a,
            2.0 * kappa * theta * s.phi - kappa * s.psi - 2.0 * nu2 * s.phi * s.psi + a * c,
            kappa * theta * s.psi + nu2 * s.phi - 0.5 * nu2 * s.psi * s.psi + 0.5 * c * c};
  }
};

RiccatiState axpy(const RiccatiState& s, double h, const RiccatiState& k) {
  return {s.phi + h * k.phi, s.psi + h * k.psi, s.chi + h * k.chi};
}

RiccatiState rk4(const RiccatiCoeffs& c, const RiccatiState& s, double h) {
  const RiccatiState k1 = c.rhs(s);
  const RiccatiState k2 = c.rhs(axpy(s, 0.5 * h, k1));
  const RiccatiState k3 = c.rhs(axpy(s, 0.5 * h, k2));
  const RiccatiState k4 = c.rhs(axpy(s, h, k3));
  return {s.phi + h / 6.0 * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi),
          s.psi + h / 6.0 * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi),
          s.chi + h / 6.0 * (k1.chi + 2.0 * k2.chi + 2.0 * k3.chi + k4.chi)};
}

std::vector<RiccatiCoeffs> riccati_coeffs(const StochVolParams& p) {
  std::vector<RiccatiCoeffs> out;
  for (int i = 0; i < p.assets(); ++i) {
    const bool linear = p.premium == PremiumKind::Linear;
    out.push_back({p.kappa[i], p.theta[i], p.nu[i] * p.nu[i], linear ? p.lambda[i] : 0.0,
                   linear ? 0.0 : p.lambda[i]});
  }
  return out;
}

constexpr double kBlowup = 1e150;

}  // namespace

RiccatiTables riccati_solve(const StochVolParams& params, const std::vector<double>& tau) {
  params.validate();
  if (tau.empty()) throw ConfigError("riccati: empty time grid");
  for (std::size_t k = 0; k < tau.size(); ++k) {
    if (!(tau[k] >= 0.0) || (k > 0 && tau[k] < tau[k - 1])) {
      throw ConfigError("riccati: time grid must be nonnegative and nondecreasing");
    }
  }
  const auto coeffs = riccati_coeffs(params);
  const int d = params.assets();
  const double h_max = tau.back() > 0.0 ? tau.back() / 2000.0 : 1.0;

  RiccatiTables out;
  out.tau = tau;
  std::vector<RiccatiState> state(d, RiccatiState{0.0, 0.0, 0.0});
  double now = 0.0;
  for (double target : tau) {
    const double span = target - now;
    const int steps = span > 0.0 ? static_cast<int>(std::ceil(span / h_max - 1e-9)) : 0;
    for (int s = 0; s < steps; ++s) {
      const double h = span / steps;
      for (int i = 0; i < d; ++i) {
        state[i] = rk4(coeffs[i], state[i], h);
        const auto& z = state[i];
        if (!std::isfinite(z.phi + z.psi + z.chi) || std::abs(z.phi) > kBlowup ||
            std::abs(z.psi) > kBlowup || std::abs(z.chi) > kBlowup) {
          const double when = now + (s + 1) * h;
          throw BlowupError("riccati: solution blows up at tau = " + std::to_string(when), s + 1,
                            i);
        }
      }
    }
    now = target;
    std::vector<double> phi(d), psi(d), chi(d);
    for (int i = 0; i < d; ++i) {
      phi[i] = state[i].phi;
      psi[i] = state[i].psi;
      chi[i] = state[i].chi;
    }
    out.phi.push_back(std::move(phi));
    out.psi.push_back(std::move(psi));
    out.chi.push_back(std::move(chi));
  }
  return out;
}

namespace {
constexpr int kOracleGrid = 2000;

// Cubic Hermite on [0, 1]: value basis h00, h10, h01, h11.
double hermite(double y0, double y1, double d0, double d1, double h, double s) {
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * y1 +
         (s3 - s2) * h * d1;
}
}  // namespace

StochVolProblem::StochVolProblem(StochVolParams params) : params_(std::move(params)) {
  params_.validate();
  std::vector<double> tau(kOracleGrid + 1);
  for (int k = 0; k <= kOracleGrid; ++k) tau[k] = params_.horizon * k / kOracleGrid;
  table_ = riccati_solve(params_, tau);
  const auto coeffs = riccati_coeffs(params_);
  const int d = params_.assets();
  dphi_.assign(tau.size(), std::vector<double>(d));
  dpsi_ = dphi_;
  dchi_ = dphi_;
  for (std::size_t k = 0; k < tau.size(); ++k) {
    for (int i = 0; i < d; ++i) {
      const RiccatiState r = coeffs[i].rhs({table_.phi[k][i], table_.psi[k][i], table_.chi[k][i]});
      dphi_[k][i] = r.phi;
      dpsi_[k][i] = r.psi;
      dchi_[k][i] = r.chi;
    }
  }
}

double StochVolProblem::premium_norm(const Vector& x) const {
  double s = 0.0;
  for (int i = 0; i < params_.assets(); ++i) {
    const double l =
        params_.premium == PremiumKind::Linear ? params_.lambda[i] * x(i + 1) : params_.lambda[i];
    s += l * l;
  }
  return std::sqrt(s);
}

ExtendedReal StochVolProblem::h(double, const Vector& x, double, const Vector& q,
                                const Matrix& gamma) const {
  const double g = gamma(0, 0);
  if (!(g < 0.0)) return ExtendedReal::plus_infinity();
  const double L = premium_norm(x);
  double out = -L * L * q(0) * q(0) / (2.0 * g);
  for (int i = 0; i < params_.assets(); ++i) {
    const double nu = params_.nu[i];
    out += params_.kappa[i] * (params_.theta[i] - x(i + 1)) * q(i + 1) +
           0.5 * nu * nu * gamma(i + 1, i + 1);
  }
  return ExtendedReal::finite(out);
}

double StochVolProblem::f(double, const Vector& x, double, const Vector& q,
                          const Matrix& sigma) const {
  check_sigma_shape(sigma);
  if (!in_domain(sigma)) throw DomainError("stochvol: sigma outside the domain of f");
  double out = -std::abs(q(0)) * std::abs(sigma(0, 0)) * premium_norm(x);
  for (int i = 0; i < params_.assets(); ++i) {
    out -= params_.kappa[i] * (params_.theta[i] - x(i + 1)) * q(i + 1);
  }
  return out;
}

SourceJet StochVolProblem::f_jet(double t, const Vector& x, double p, const Vector& q,
                                 const Matrix& sigma) const {
  SourceJet j;
  j.value = f(t, x, p, q, sigma);
  j.d_q = Vector::Zero(dim());
  j.d_q(0) = -std::abs(sigma(0, 0)) * premium_norm(x) * sign0(q(0));
  for (int i = 0; i < params_.assets(); ++i) {
    j.d_q(i + 1) = -params_.kappa[i] * (params_.theta[i] - x(i + 1));
  }
  return j;
}

Matrix StochVolProblem::df_dsigma(double, const Vector& x, double, const Vector& q,
                                  const Matrix& sigma) const {
  check_sigma_shape(sigma);
  Matrix g = Matrix::Zero(dim(), dim());
  g(0, 0) = -std::abs(q(0)) * premium_norm(x) * sign_plus(sigma(0, 0));
  return g;
}

double StochVolProblem::terminal(const Vector& x) const {
  return 1.0 - std::exp(-params_.eta * x(0));
}

bool StochVolProblem::in_domain(const Matrix& sigma) const {
  if (sigma.rows() != dim() || sigma.cols() != dim() || !sigma.allFinite()) return false;
  for (int i = 0; i < dim(); ++i) {
    for (int j = 0; j < dim(); ++j) {
      if (i == j && i > 0) {
        if (!near(sigma(i, i), params_.nu[i - 1])) return false;
      } else if (i != j && sigma(i, j) != 0.0) {
        return false;
      }
    }
  }
  return true;
}

Matrix StochVolProblem::project(const Matrix& raw, double, const Vector&) const {
  check_sigma_shape(raw);
  Matrix s = Matrix::Zero(dim(), dim());
  s(0, 0) = std::abs(raw(0, 0));
  for (int i = 0; i < params_.assets(); ++i) s(i + 1, i + 1) = params_.nu[i];
  return s;
}

Mask StochVolProblem::free_mask() const {
  Mask m = Mask::Constant(dim(), dim(), false);
  m(0, 0) = true;
  return m;
}

Vector StochVolProblem::path_drift(double, const Vector& x, const Matrix& sigma) const {
  Vector b(dim());
  b(0) = std::abs(sigma(0, 0)) * premium_norm(x);
  for (int i = 0; i < params_.assets(); ++i) {
    b(i + 1) = params_.kappa[i] * (params_.theta[i] - x(i + 1));
  }
  return b;
}

FieldPtr StochVolProblem::oracle() const {
  return std::make_shared<FunctionField>(dim(), [this](double t, const Vector& x) {
    const int d = params_.assets();
    const double T = params_.horizon;
    const double tau = std::clamp(T - t, 0.0, T);
    const double h = T / kOracleGrid;
    const int k = std::min(static_cast<int>(tau / h), kOracleGrid - 1);
    const double s = (tau - k * h) / h;

    double S = 0.0, S_tau = 0.0;
    Vector S_y(d), S_yy(d);
    for (int i = 0; i < d; ++i) {
      const double phi = hermite(table_.phi[k][i], table_.phi[k + 1][i], dphi_[k][i],
                                 dphi_[k + 1][i], h, s);
      const double psi = hermite(table_.psi[k][i], table_.psi[k + 1][i], dpsi_[k][i],
                                 dpsi_[k + 1][i], h, s);
      const double chi = hermite(table_.chi[k][i], table_.chi[k + 1][i], dchi_[k][i],
                                 dchi_[k + 1][i], h, s);
      const bool linear = params_.premium == PremiumKind::Linear;
      const RiccatiCoeffs c{params_.kappa[i], params_.theta[i], params_.nu[i] * params_.nu[i],
                            linear ? params_.lambda[i] : 0.0, linear ? 0.0 : params_.lambda[i]};
      const RiccatiState r = c.rhs({phi, psi, chi});
      const double y = x(i + 1);
      S += phi * y * y + psi * y + chi;
      S_tau += r.phi * y * y + r.psi * y + r.chi;
      S_y(i) = 2.0 * phi * y + psi;
      S_yy(i) = 2.0 * phi;
    }
    const double eta = params_.eta;
    const double E = std::exp(-eta * x(0) - S);
    FieldValue fv;
    fv.value = 1.0 - E;
    fv.grad.resize(d + 1);
    fv.grad(0) = eta * E;
    fv.grad.tail(d) = E * S_y;
    fv.hess = Matrix::Zero(d + 1, d + 1);
    fv.hess(0, 0) = -eta * eta * E;
    for (int i = 0; i < d; ++i) {
      fv.hess(0, i + 1) = fv.hess(i + 1, 0) = -eta * E * S_y(i);
      for (int j = 0; j < d; ++j) {
        fv.hess(i + 1, j + 1) = E * ((i == j ? S_yy(i) : 0.0) - S_y(i) * S_y(j));
      }
    }
    fv.dt = -E * S_tau;
    return fv;
  });
}

Matrix StochVolProblem::optimal_sigma(double t, const Vector& x) const {
  Matrix raw = Matrix::Zero(dim(), dim());
  raw(0, 0) = premium_norm(x) / params_.eta;
  return project(raw, t, x);
}

FieldPtr StochVolProblem::semilinear_oracle(const DiffusionField& sigma) const {
  if (sigma.kind() != DiffusionField::Kind::Constant || params_.premium != PremiumKind::Constant) {
    throw NoOracleError("stochvol: semilinear closed form needs constant sigma and premia");
  }
  const double s = std::abs(sigma.base()(0, 0));
  const double eta = params_.eta;
  const double L = premium_norm(Vector::Zero(dim()));
  const double rate = 0.5 * s * s * eta * eta - L * s * eta;
  const double T = params_.horizon;
  return std::make_shared<FunctionField>(dim(), [=, this](double t, const Vector& x) {
    const double e = std::exp(-eta * x(0) + rate * (T - t));
    FieldValue fv;
    fv.value = 1.0 - e;
    fv.grad = Vector::Zero(dim());
    fv.grad(0) = eta * e;
    fv.hess = Matrix::Zero(dim(), dim());
    fv.hess(0, 0) = -eta * eta * e;
    fv.dt = rate * e;
    return fv;
  });
}

// --- Leveraged stochastic volatility -------------------------------------

LeveragedStochVolProblem::LeveragedStochVolProblem(StochVolParams params, std::vector<double> rho)
    : params_(std::move(params)), rho_(std::move(rho)) {
  params_.validate();
  if (static_cast<int>(rho_.size()) != params_.assets()) {
    throw ConfigError("stochvol-leverage: rho must have one entry per asset");
  }
  for (double r : rho_) {
    if (!(r > -1.0 && r < 1.0)) throw ConfigError("stochvol-leverage: rho must lie in (-1, 1)");
  }
}

double LeveragedStochVolProblem::premium(int i, double y) const {
  return params_.premium == PremiumKind::Linear ? params_.lambda[i] * y : params_.lambda[i];
}

ExtendedReal LeveragedStochVolProblem::h(double, const Vector& x, double, const Vector& q,
                                         const Matrix& gamma) const {
  const double g = gamma(0, 0);
  if (!(g < 0.0)) return ExtendedReal::plus_infinity();
  double num = 0.0;
  double out = 0.0;
  for (int i = 0; i < params_.assets(); ++i) {
    const double nu = params_.nu[i];
    const double a = premium(i, x(i + 1)) * q(0) + rho_[i] * nu * gamma(0, i + 1);
    num += a * a;
    out += params_.kappa[i] * (params_.theta[i] - x(i + 1)) * q(i + 1) +
           0.5 * nu * nu * gamma(i + 1, i + 1);
  }
  return ExtendedReal::finite(out - 0.5 * num / g);
}

double LeveragedStochVolProblem::f(double t, const Vector& x, double p, const Vector& q,
                                   const Matrix& sigma) const {
  return f_jet(t, x, p, q, sigma).value;
}

SourceJet LeveragedStochVolProblem::f_jet(double, const Vector& x, double, const Vector& q,
                                          const Matrix& sigma) const {
  check_sigma_shape(sigma);
  if (!in_domain(sigma)) throw DomainError("stochvol-leverage: sigma outside the domain of f");
  const int d = params_.assets();
  double uncorrelated = 0.0;
  double correlated = 0.0;  // sum over rho_i != 0 of sigma_0i lambda_i / (rho_i nu_i)
  for (int i = 0; i < d; ++i) {
    const double l = premium(i, x(i + 1));
    if (rho_[i] == 0.0) {
      uncorrelated += l * l;
    } else {
      correlated += sigma(0, i + 1) * l / (rho_[i] * params_.nu[i]);
    }
  }
  const double root = std::sqrt(uncorrelated);
  const double s00 = std::abs(sigma(0, 0));
  SourceJet j;
  j.value = -s00 * std::abs(q(0)) * root - s00 * q(0) * correlated;
  j.d_q = Vector::Zero(d + 1);
  j.d_q(0) = -s00 * root * sign0(q(0)) - s00 * correlated;
  for (int i = 0; i < d; ++i) {
    const double drift = params_.kappa[i] * (params_.theta[i] - x(i + 1));
    j.value -= drift * q(i + 1);
    j.d_q(i + 1) = -drift;
  }
  return j;
}

Matrix LeveragedStochVolProblem::df_dsigma(double, const Vector& x, double, const Vector& q,
                                           const Matrix& sigma) const {
  check_sigma_shape(sigma);
  const int d = params_.assets();
  double uncorrelated = 0.0, correlated = 0.0;
  Matrix g = Matrix::Zero(d + 1, d + 1);
  const double s00 = std::abs(sigma(0, 0));
  for (int i = 0; i < d; ++i) {
    const double l = premium(i, x(i + 1));
    if (rho_[i] == 0.0) {
      uncorrelated += l * l;
    } else {
      const double w = l / (rho_[i] * params_.nu[i]);
      correlated += sigma(0, i + 1) * w;
      g(0, i + 1) = -s00 * q(0) * w;
    }
  }
  g(0, 0) = sign_plus(sigma(0, 0)) * (-std::abs(q(0)) * std::sqrt(uncorrelated) - q(0) * correlated);
  return g;
}

double LeveragedStochVolProblem::terminal(const Vector& x) const {
  return 1.0 - std::exp(-params_.eta * x(0));
}

bool LeveragedStochVolProblem::in_domain(const Matrix& sigma) const {
  const int n = dim();
  if (sigma.rows() != n || sigma.cols() != n || !sigma.allFinite()) return false;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const bool structural = (i == 0) || (i == j);
      if (!structural && sigma(i, j) != 0.0) return false;
    }
  }
  for (int i = 0; i < params_.assets(); ++i) {
    const double nu = params_.nu[i];
    const double s0 = sigma(0, i + 1);
    if (std::abs(s0) > std::abs(rho_[i] * nu) * (1.0 + 1e-12)) return false;
    if (!near(s0 * s0 + sigma(i + 1, i + 1) * sigma(i + 1, i + 1), nu * nu)) return false;
    if (sigma(i + 1, i + 1) < 0.0) return false;
  }
  return true;
}

Matrix LeveragedStochVolProblem::project(const Matrix& raw, double, const Vector&) const {
  check_sigma_shape(raw);
  const int d = params_.assets();
  Matrix s = Matrix::Zero(d + 1, d + 1);
  s(0, 0) = std::abs(raw(0, 0));
  for (int i = 0; i < d; ++i) {
    const double nu = params_.nu[i];
    const double bound = std::abs(rho_[i] * nu);
    const double s0 = std::clamp(raw(0, i + 1), -bound, bound);
    s(0, i + 1) = s0;
    s(i + 1, i + 1) = std::sqrt(std::max(0.0, nu * nu - s0 * s0));
  }
  return s;
}

Mask LeveragedStochVolProblem::free_mask() const {
  Mask m = Mask::Constant(dim(), dim(), false);
  m(0, 0) = true;
  for (int i = 0; i < params_.assets(); ++i) m(0, i + 1) = rho_[i] != 0.0;
  return m;
}

// --- Heat -----------------------------------------------------------------

HeatProblem::HeatProblem(int dim, double diffusion, double horizon)
    : dim_(dim), s_(diffusion), horizon_(horizon) {
  if (dim < 1) throw ConfigError("heat: dimension must be at least 1");
  if (!(diffusion >= 0.0)) throw ConfigError("heat: diffusion must be nonnegative");
  if (!(horizon > 0.0)) throw ConfigError("heat: horizon must be positive");
}

ExtendedReal HeatProblem::h(double, const Vector&, double, const Vector&,
                            const Matrix& gamma) const {
  return ExtendedReal::finite(0.5 * s_ * s_ * gamma.trace());
}

double HeatProblem::f(double, const Vector&, double, const Vector&, const Matrix& sigma) const {
  check_sigma_shape(sigma);
  if (!in_domain(sigma)) throw DomainError("heat: sigma outside the domain of f");
  return 0.0;
}

SourceJet HeatProblem::f_jet(double t, const Vector& x, double p, const Vector& q,
                             const Matrix& sigma) const {
  SourceJet j;
  j.value = f(t, x, p, q, sigma);
  j.d_q = Vector::Zero(dim_);
  return j;
}

Matrix HeatProblem::df_dsigma(double, const Vector&, double, const Vector&,
                              const Matrix& sigma) const {
  check_sigma_shape(sigma);
  return Matrix::Zero(dim_, dim_);
}

double HeatProblem::terminal(const Vector& x) const { return x.squaredNorm(); }

bool HeatProblem::in_domain(const Matrix& sigma) const {
  return sigma.rows() == dim_ && sigma.cols() == dim_ && sigma.allFinite() &&
         (sigma - s_ * Matrix::Identity(dim_, dim_)).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + s_);
}

Matrix HeatProblem::project(const Matrix& raw, double, const Vector&) const {
  check_sigma_shape(raw);
  return s_ * Matrix::Identity(dim_, dim_);
}

Mask HeatProblem::free_mask() const { return Mask::Constant(dim_, dim_, false); }

FieldPtr HeatProblem::oracle() const {
  return semilinear_oracle(constant_field(s_));
}

Matrix HeatProblem::optimal_sigma(double, const Vector&) const {
  return s_ * Matrix::Identity(dim_, dim_);
}

FieldPtr HeatProblem::semilinear_oracle(const DiffusionField& sigma) const {
  if (sigma.kind() != DiffusionField::Kind::Constant) {
    throw NoOracleError("heat: semilinear closed form needs a constant sigma");
  }
  const Matrix s = sigma.base();
  const double trace = (s.transpose() * s).trace();
  const int d = dim_;
  const double T = horizon_;
  return std::make_shared<FunctionField>(d, [=](double t, const Vector& x) {
    FieldValue fv;
    fv.value = x.squaredNorm() + trace * (T - t);
    fv.grad = 2.0 * x;
    fv.hess = 2.0 * Matrix::Identity(d, d);
    fv.dt = -trace;
    return fv;
  });
}

}  // namespace fnascent
