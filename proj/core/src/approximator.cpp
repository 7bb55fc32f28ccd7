#include "fnascent/approximator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace fnascent::nn {

namespace {

// Elementwise activation and its first two derivatives. `a` is the already
// computed activation, which tanh reuses.
Matrix activate(Activation kind, const Matrix& s) {
  switch (kind) {
    case Activation::Tanh:
      // Through the vectorised exp; saturates cleanly to +-1.
      return (1.0 - 2.0 / ((2.0 * s.array()).exp() + 1.0)).matrix();
    case Activation::Softplus:
      return (s.array().max(0.0) + (-s.array().abs()).exp().log1p()).matrix();
    case Activation::Square:
      return s.array().square().matrix();
    case Activation::Identity:
      return s;
  }
  return s;
}

Matrix first_derivative(Activation kind, const Matrix& s, const Matrix& a) {
  switch (kind) {
    case Activation::Tanh:
      return (1.0 - a.array().square()).matrix();
    case Activation::Softplus:
      return (1.0 / (1.0 + (-s.array()).exp())).matrix();
    case Activation::Square:
      return (2.0 * s.array()).matrix();
    case Activation::Identity:
      return Matrix::Ones(s.rows(), s.cols());
  }
  return Matrix::Ones(s.rows(), s.cols());
}

Matrix second_derivative(Activation kind, const Matrix& s, const Matrix& a) {
  switch (kind) {
    case Activation::Tanh:
      return (-2.0 * a.array() * (1.0 - a.array().square())).matrix();
    case Activation::Softplus: {
      const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-s.array()).exp());
      return (sig * (1.0 - sig)).matrix();
    }
    case Activation::Square:
      return Matrix::Constant(s.rows(), s.cols(), 2.0);
    case Activation::Identity:
      return Matrix::Zero(s.rows(), s.cols());
  }
  return Matrix::Zero(s.rows(), s.cols());
}

void check_widths(const std::vector<int>& widths) {
  if (widths.size() < 2) throw ShapeError("network needs at least input and output widths");
  for (int w : widths) {
    if (w <= 0) throw ShapeError("network widths must be positive");
  }
  if (widths.back() != 1) throw ShapeError("network output width must be 1");
}

bool same_shape(const std::vector<Layer>& a, const std::vector<Layer>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].weight.rows() != b[i].weight.rows() || a[i].weight.cols() != b[i].weight.cols() ||
        a[i].bias.size() != b[i].bias.size()) {
      return false;
    }
  }
  return true;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Softplus:
      return "softplus";
    case Activation::Square:
      return "square";
    case Activation::Identity:
      return "identity";
  }
  return "tanh";
}

Activation activation_from_string(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "softplus") return Activation::Softplus;
  if (name == "square") return Activation::Square;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

Network::Network(std::vector<int> widths, Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  check_widths(widths_);
  layers_.resize(widths_.size() - 1);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    layers_[l].weight = Matrix::Zero(widths_[l + 1], widths_[l]);
    layers_[l].bias = Vector::Zero(widths_[l + 1]);
  }
}

Network Network::random(std::vector<int> widths, Activation activation, std::uint64_t seed) {
  Network net(std::move(widths), activation);
  std::mt19937_64 engine(seed);
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = uniform(engine);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = uniform(engine);
  }
  return net;
}

std::vector<int> Network::default_widths(int input_dim, int state_dim) {
  const int w = std::max(16, 4 * (state_dim + 2));
  return {input_dim, w, w, w, 1};
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

void Network::check_input(Eigen::Index rows) const {
  if (layers_.empty()) throw ShapeError("network has no layers");
  if (rows != input_dim()) {
    throw ShapeError("input has " + std::to_string(rows) + " entries, network expects " +
                     std::to_string(input_dim()));
  }
}

double Network::forward(const Eigen::Ref<const Vector>& input) const {
  check_input(input.size());
  Vector a = input;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    Matrix s = layers_[l].weight * a + layers_[l].bias;
    a = activate(activation_, s);
  }
  return (layers_.back().weight * a)(0) + layers_.back().bias(0);
}

Vector Network::grad_input(const Eigen::Ref<const Vector>& input) const {
  check_input(input.size());
  const std::size_t hidden = layers_.size() - 1;
  std::vector<Matrix> pre(hidden), act(hidden);
  Vector a = input;
  for (std::size_t l = 0; l < hidden; ++l) {
    pre[l] = layers_[l].weight * a + layers_[l].bias;
    act[l] = activate(activation_, pre[l]);
    a = act[l];
  }
  Vector abar = layers_.back().weight.transpose();
  for (std::size_t l = hidden; l-- > 0;) {
    const Vector sbar = abar.cwiseProduct(first_derivative(activation_, pre[l], act[l]));
    abar = layers_[l].weight.transpose() * sbar;
  }
  return abar;
}

void Network::derivatives(const Eigen::Ref<const Vector>& input, double& value, Vector& grad,
                          Matrix& hess) const {
  check_input(input.size());
  const Eigen::Index n = input.size();
  // Forward second-order propagation: per unit, the value, its input Jacobian
  // row, and its flattened input Hessian (n*n columns).
  Vector a = input;
  Matrix jac = Matrix::Identity(n, n);
  Matrix hflat = Matrix::Zero(n, n * n);
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Matrix s = layer.weight * a + layer.bias;
    Matrix js = layer.weight * jac;
    Matrix hs = layer.weight * hflat;
    Matrix act = activate(activation_, s);
    Matrix d1 = first_derivative(activation_, s, act);
    Matrix d2 = second_derivative(activation_, s, act);
    for (Eigen::Index k = 0; k < s.rows(); ++k) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          hs(k, i * n + j) = d1(k, 0) * hs(k, i * n + j) + d2(k, 0) * js(k, i) * js(k, j);
        }
      }
      js.row(k) *= d1(k, 0);
    }
    a = act;
    jac = std::move(js);
    hflat = std::move(hs);
  }
  const auto& out = layers_.back();
  value = (out.weight * a)(0) + out.bias(0);
  grad = (out.weight * jac).transpose();
  const RowVector h = out.weight * hflat;
  hess.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) hess(i, j) = h(i * n + j);
  }
  hess = 0.5 * (hess + hess.transpose()).eval();
}

Matrix Network::hessian_input(const Eigen::Ref<const Vector>& input) const {
  double value = 0.0;
  Vector grad;
  Matrix hess;
  derivatives(input, value, grad, hess);
  return hess;
}

RowVector Network::forward_batch(const Eigen::Ref<const Matrix>& inputs) const {
  check_input(inputs.rows());
  Matrix a = inputs;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    Matrix s = layers_[l].weight * a;
    s.colwise() += layers_[l].bias;
    a = activate(activation_, s);
  }
  RowVector out = layers_.back().weight * a;
  out.array() += layers_.back().bias(0);
  return out;
}

void Network::forward_tangent(const Eigen::Ref<const Matrix>& inputs,
                              const Eigen::Ref<const Matrix>& directions, TangentCache& cache,
                              RowVector& value, RowVector& tangent) const {
  check_input(inputs.rows());
  if (directions.rows() != inputs.rows() || directions.cols() != inputs.cols()) {
    throw ShapeError("tangent directions must match the input batch shape");
  }
  const std::size_t hidden = layers_.size() - 1;
  cache.input = inputs;
  cache.direction = directions;
  cache.pre.resize(hidden);
  cache.act.resize(hidden);
  cache.dpre.resize(hidden);
  cache.dact.resize(hidden);
  for (std::size_t l = 0; l < hidden; ++l) {
    const Matrix& a_prev = l == 0 ? cache.input : cache.act[l - 1];
    const Matrix& da_prev = l == 0 ? cache.direction : cache.dact[l - 1];
    cache.pre[l].noalias() = layers_[l].weight * a_prev;
    cache.pre[l].colwise() += layers_[l].bias;
    cache.dpre[l].noalias() = layers_[l].weight * da_prev;
    cache.act[l] = activate(activation_, cache.pre[l]);
    cache.dact[l] =
        first_derivative(activation_, cache.pre[l], cache.act[l]).cwiseProduct(cache.dpre[l]);
  }
  const Matrix& a_last = hidden == 0 ? cache.input : cache.act.back();
  const Matrix& da_last = hidden == 0 ? cache.direction : cache.dact.back();
  value.noalias() = layers_.back().weight * a_last;
  value.array() += layers_.back().bias(0);
  tangent.noalias() = layers_.back().weight * da_last;
}

void Network::backward_tangent(const TangentCache& cache, const RowVector& value_seed,
                               const RowVector& tangent_seed, ParamGradient& grad) const {
  if (!grad.congruent(*this)) throw ShapeError("gradient is not congruent with the network");
  const std::size_t hidden = layers_.size() - 1;
  auto& g = grad.layers();
  const Matrix& a_last = hidden == 0 ? cache.input : cache.act.back();
  const Matrix& da_last = hidden == 0 ? cache.direction : cache.dact.back();
  g.back().weight.noalias() += value_seed * a_last.transpose();
  g.back().weight.noalias() += tangent_seed * da_last.transpose();
  g.back().bias(0) += value_seed.sum();
  if (hidden == 0) return;

  Matrix abar = layers_.back().weight.transpose() * value_seed;
  Matrix dabar = layers_.back().weight.transpose() * tangent_seed;
  for (std::size_t l = hidden; l-- > 0;) {
    const Matrix d1 = first_derivative(activation_, cache.pre[l], cache.act[l]);
    const Matrix d2 = second_derivative(activation_, cache.pre[l], cache.act[l]);
    const Matrix sbar = (abar.array() * d1.array() +
                         dabar.array() * cache.dpre[l].array() * d2.array())
                            .matrix();
    const Matrix dsbar = dabar.cwiseProduct(d1);
    const Matrix& a_prev = l == 0 ? cache.input : cache.act[l - 1];
    const Matrix& da_prev = l == 0 ? cache.direction : cache.dact[l - 1];
    g[l].weight.noalias() += sbar * a_prev.transpose();
    g[l].weight.noalias() += dsbar * da_prev.transpose();
    g[l].bias += sbar.rowwise().sum();
    if (l > 0) {
      abar.noalias() = layers_[l].weight.transpose() * sbar;
      dabar.noalias() = layers_[l].weight.transpose() * dsbar;
    }
  }
}

ParamGradient ParamGradient::zeros_like(const Network& net) {
  ParamGradient g;
  g.layers_.reserve(net.layers().size());
  for (const auto& layer : net.layers()) {
    g.layers_.push_back(
        {Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
  }
  return g;
}

void ParamGradient::set_zero() {
  for (auto& layer : layers_) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
}

bool ParamGradient::congruent(const Network& net) const { return same_shape(layers_, net.layers()); }

bool ParamGradient::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const Layer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

double ParamGradient::squared_norm() const {
  double s = 0.0;
  for (const auto& layer : layers_) s += layer.weight.squaredNorm() + layer.bias.squaredNorm();
  return s;
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& other) {
  if (!same_shape(layers_, other.layers_)) throw ShapeError("gradient shapes differ");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weight += other.layers_[i].weight;
    layers_[i].bias += other.layers_[i].bias;
  }
  return *this;
}

ParamGradient& ParamGradient::operator*=(double s) {
  for (auto& layer : layers_) {
    layer.weight *= s;
    layer.bias *= s;
  }
  return *this;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs <= 0) throw ConfigError("epoch count must be positive");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw ConfigError("adaptive-moment constants out of range");
  }
}

OptimizerState OptimizerState::for_network(const Network& net) {
  return {ParamGradient::zeros_like(net), ParamGradient::zeros_like(net), 0};
}

void train_step(Network& net, const ParamGradient& grad, const TrainConfig& config,
                OptimizerState& state) {
  if (!grad.congruent(net)) throw ShapeError("gradient is not congruent with the network");
  if (!grad.all_finite()) throw NonFiniteError("non-finite parameter gradient");
  auto& layers = net.layers();
  const auto& g = grad.layers();
  if (config.optimizer == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight -= config.learning_rate * g[i].weight;
      layers[i].bias -= config.learning_rate * g[i].bias;
    }
    ++state.step;
    return;
  }
  if (!state.first_moment.congruent(net) || !state.second_moment.congruent(net)) {
    state = OptimizerState::for_network(net);
  }
  ++state.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  auto& m = state.first_moment.layers();
  auto& v = state.second_moment.layers();
  auto update = [&](auto& param, const auto& gr, auto& mom1, auto& mom2) {
    mom1 = b1 * mom1 + (1.0 - b1) * gr;
    mom2 = b2 * mom2 + (1.0 - b2) * gr.cwiseProduct(gr);
    param.array() -= config.learning_rate * (mom1.array() / c1) /
                     ((mom2.array() / c2).sqrt() + config.epsilon);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, g[i].weight, m[i].weight, v[i].weight);
    update(layers[i].bias, g[i].bias, m[i].bias, v[i].bias);
  }
}

namespace {

constexpr const char* kCheckpointMagic = "fnascent-network";
constexpr int kCheckpointVersion = 1;

void write_double(std::ostream& out, double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  out.write(buf, ptr - buf);
}

void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw ConfigError("checkpoint: expected '" + token + "', got '" + got + "'");
  }
}

}  // namespace

void save_checkpoint(const Network& net, std::ostream& out) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "activation " << to_string(net.activation()) << '\n';
  out << "widths " << net.widths().size();
  for (int w : net.widths()) out << ' ' << w;
  out << '\n';
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layers()[l];
    out << "weight " << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
        if (j) out << ' ';
        write_double(out, layer.weight(i, j));
      }
      out << '\n';
    }
    out << "bias " << layer.bias.size() << '\n';
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      if (i) out << ' ';
      write_double(out, layer.bias(i));
    }
    out << '\n';
  }
  out << "end\n";
}

Network load_checkpoint(std::istream& in) {
  expect_token(in, kCheckpointMagic);
  int version = 0;
  in >> version;
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  }
  expect_token(in, "activation");
  std::string act;
  in >> act;
  expect_token(in, "widths");
  std::size_t count = 0;
  in >> count;
  std::vector<int> widths(count);
  for (auto& w : widths) in >> w;
  if (!in) throw ConfigError("checkpoint: truncated header");
  Network net(widths, activation_from_string(act));
  for (auto& layer : net.layers()) {
    Eigen::Index rows = 0, cols = 0;
    expect_token(in, "weight");
    in >> rows >> cols;
    if (rows != layer.weight.rows() || cols != layer.weight.cols()) {
      throw ConfigError("checkpoint: weight shape disagrees with widths");
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) in >> layer.weight(i, j);
    }
    expect_token(in, "bias");
    in >> rows;
    if (rows != layer.bias.size()) throw ConfigError("checkpoint: bias shape disagrees");
    for (Eigen::Index i = 0; i < rows; ++i) in >> layer.bias(i);
    if (!in) throw ConfigError("checkpoint: truncated parameter block");
  }
  expect_token(in, "end");
  return net;
}

void save_checkpoint(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path);
  save_checkpoint(net, out);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace fnascent::nn
