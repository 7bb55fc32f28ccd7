#include "fnascent/field.hpp"

namespace fnascent {

NetworkField::NetworkField(nn::Network net) : net_(std::move(net)) {
  if (net_.input_dim() < 2) throw ShapeError("field network needs (t, x) inputs");
}

namespace {
Vector time_state(double t, const Vector& x) {
  Vector z(x.size() + 1);
  z(0) = t;
  z.tail(x.size()) = x;
  return z;
}
}  // namespace

FieldValue NetworkField::eval(double t, const Vector& x) const {
  const Vector z = time_state(t, x);
  double value = 0.0;
  Vector grad;
  Matrix hess;
  net_.derivatives(z, value, grad, hess);
  const auto n = x.size();
  FieldValue out;
  out.value = value;
  out.dt = grad(0);
  out.grad = grad.tail(n);
  out.hess = hess.bottomRightCorner(n, n);
  return out;
}

double NetworkField::value(double t, const Vector& x) const { return net_.forward(time_state(t, x)); }

DiffusionField DiffusionField::constant(Matrix sigma, Mask mask, Projection projection) {
  if (sigma.rows() != mask.rows() || sigma.cols() != mask.cols()) {
    throw ShapeError("diffusion matrix and mask differ in shape");
  }
  DiffusionField f;
  f.kind_ = Kind::Constant;
  f.base_ = std::move(sigma);
  f.mask_ = std::move(mask);
  f.projection_ = std::move(projection);
  return f;
}

DiffusionField DiffusionField::network(Matrix base, Mask mask, std::vector<nn::Network> nets,
                                       Projection projection) {
  DiffusionField f = constant(std::move(base), std::move(mask), std::move(projection));
  f.kind_ = Kind::Network;
  if (nets.size() != f.free_entries().size()) {
    throw ShapeError("need exactly one network per free diffusion entry");
  }
  f.nets_ = std::move(nets);
  return f;
}

DiffusionField DiffusionField::function(Fn fn, Mask mask, Projection projection) {
  DiffusionField f;
  f.kind_ = Kind::Function;
  f.base_ = Matrix::Zero(mask.rows(), mask.cols());
  f.mask_ = std::move(mask);
  f.fn_ = std::move(fn);
  f.projection_ = std::move(projection);
  return f;
}

std::vector<std::pair<int, int>> DiffusionField::free_entries() const {
  std::vector<std::pair<int, int>> out;
  for (Eigen::Index i = 0; i < mask_.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask_.cols(); ++j) {
      if (mask_(i, j)) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  return out;
}

Matrix DiffusionField::operator()(double t, const Vector& x) const {
  Matrix s;
  switch (kind_) {
    case Kind::Constant:
      s = base_;
      break;
    case Kind::Network: {
      s = base_;
      const auto entries = free_entries();
      Vector z(x.size() + 1);
      z(0) = t;
      z.tail(x.size()) = x;
      for (std::size_t k = 0; k < entries.size(); ++k) {
        s(entries[k].first, entries[k].second) = nets_[k].forward(z);
      }
      break;
    }
    case Kind::Function:
      s = fn_(t, x);
      break;
  }
  return projection_ ? projection_(s, t, x) : s;
}

Vector DiffusionField::free_values(double t, const Vector& x) const {
  const Matrix s = (*this)(t, x);
  const auto entries = free_entries();
  Vector v(static_cast<Eigen::Index>(entries.size()));
  for (std::size_t k = 0; k < entries.size(); ++k) v(k) = s(entries[k].first, entries[k].second);
  return v;
}

}  // namespace fnascent
