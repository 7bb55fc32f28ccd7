#pragma once

#include "fnascent/approximator.hpp"
#include "fnascent/common.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace fnascent {

/// Value and spatial derivatives of a scalar field at one (t, x).
struct FieldValue {
  double value = 0.0;
  Vector grad;
  Matrix hess;
  /// Time derivative when the representation knows it (closed forms, networks).
  double dt = std::numeric_limits<double>::quiet_NaN();
};

/// A globally evaluable approximation of v(t, x) with first and second
/// spatial derivatives. Evaluation is const and thread-safe.
class FieldEstimate {
 public:
  virtual ~FieldEstimate() = default;
  virtual int dim() const = 0;
  virtual FieldValue eval(double t, const Vector& x) const = 0;
  virtual double value(double t, const Vector& x) const { return eval(t, x).value; }
};

using FieldPtr = std::shared_ptr<const FieldEstimate>;

/// Wraps a closure; used for closed-form oracles and test fields.
class FunctionField final : public FieldEstimate {
 public:
  using Fn = std::function<FieldValue(double, const Vector&)>;
  FunctionField(int dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
  int dim() const override { return dim_; }
  FieldValue eval(double t, const Vector& x) const override { return fn_(t, x); }

 private:
  int dim_;
  Fn fn_;
};

/// v(t, x) = U([t, x]); derivatives are exact input derivatives of U.
class NetworkField final : public FieldEstimate {
 public:
  explicit NetworkField(nn::Network net);
  int dim() const override { return net_.input_dim() - 1; }
  FieldValue eval(double t, const Vector& x) const override;
  double value(double t, const Vector& x) const override;
  const nn::Network& network() const { return net_; }

 private:
  nn::Network net_;
};

/// Boolean pattern of the entries of sigma that vary inside D_f.
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// The function-valued diffusion parameter sigma(t, x). A base matrix carries
/// the fixed entries; the masked ("free") entries come from the representation:
/// a constant per entry, one fitted network per entry, or a closure. The
/// projection onto D_f is applied on every evaluation.
class DiffusionField {
 public:
  enum class Kind { Constant, Network, Function };
  using Projection = std::function<Matrix(const Matrix&, double, const Vector&)>;
  using Fn = std::function<Matrix(double, const Vector&)>;

  static DiffusionField constant(Matrix sigma, Mask mask, Projection projection);
  static DiffusionField network(Matrix base, Mask mask, std::vector<nn::Network> nets,
                                Projection projection);
  static DiffusionField function(Fn fn, Mask mask, Projection projection);

  Kind kind() const { return kind_; }
  int dim() const { return static_cast<int>(mask_.rows()); }
  const Mask& mask() const { return mask_; }
  const Matrix& base() const { return base_; }
  const std::vector<nn::Network>& networks() const { return nets_; }
  const Projection& projection() const { return projection_; }

  /// Row-major list of (row, col) of the free entries.
  std::vector<std::pair<int, int>> free_entries() const;

  Matrix operator()(double t, const Vector& x) const;
  Vector free_values(double t, const Vector& x) const;

 private:
  Kind kind_ = Kind::Constant;
  Matrix base_;
  Mask mask_;
  std::vector<nn::Network> nets_;
  Fn fn_;
  Projection projection_;
};

}  // namespace fnascent
