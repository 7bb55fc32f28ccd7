#pragma once

#include "fnascent/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

// Small feed-forward networks with smooth activations. Besides the usual
// parameter gradient, the networks expose exact input derivatives (gradient and
// Hessian) and a batched "value + directional derivative" pass whose reverse
// sweep differentiates THROUGH the input gradient. The BSDE loss needs that,
// because the rollout consumes grad_x U and the loss is minimised over U's
// parameters.
namespace fnascent::nn {

enum class Activation { Tanh, Softplus, Square, Identity };

std::string to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

class ParamGradient;

class Network {
 public:
  Network() = default;
  /// All parameters zero. `widths` = {input, hidden..., output}; output must be 1.
  Network(std::vector<int> widths, Activation activation);

  /// Weights and biases uniform in +-1/sqrt(fan_in), from a seeded engine.
  static Network random(std::vector<int> widths, Activation activation, std::uint64_t seed);

  /// {input_dim, w, w, w, 1} with w = max(16, 4 * (state_dim + 2)).
  static std::vector<int> default_widths(int input_dim, int state_dim);

  int input_dim() const { return widths_.empty() ? 0 : widths_.front(); }
  const std::vector<int>& widths() const { return widths_; }
  Activation activation() const { return activation_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  double forward(const Eigen::Ref<const Vector>& input) const;
  Vector grad_input(const Eigen::Ref<const Vector>& input) const;
  Matrix hessian_input(const Eigen::Ref<const Vector>& input) const;

  /// Value, input gradient and input Hessian from one forward second-order sweep.
  void derivatives(const Eigen::Ref<const Vector>& input, double& value, Vector& grad,
                   Matrix& hess) const;

  /// Columns of `inputs` are points.
  RowVector forward_batch(const Eigen::Ref<const Matrix>& inputs) const;

  struct TangentCache {
    Matrix input;
    Matrix direction;
    std::vector<Matrix> pre;   // pre-activations per hidden layer
    std::vector<Matrix> act;   // activations per hidden layer
    std::vector<Matrix> dpre;  // tangent of pre-activations
    std::vector<Matrix> dact;  // tangent of activations
  };

  /// Batched value and directional derivative d/de U(x + e*dir) at e = 0.
  void forward_tangent(const Eigen::Ref<const Matrix>& inputs,
                       const Eigen::Ref<const Matrix>& directions, TangentCache& cache,
                       RowVector& value, RowVector& tangent) const;

  /// Accumulates d/dtheta sum_b (value_seed_b * value_b + tangent_seed_b * tangent_b).
  void backward_tangent(const TangentCache& cache, const RowVector& value_seed,
                        const RowVector& tangent_seed, ParamGradient& grad) const;

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<int> widths_;
  Activation activation_ = Activation::Tanh;
  std::vector<Layer> layers_;
};

class ParamGradient {
 public:
  ParamGradient() = default;
  static ParamGradient zeros_like(const Network& net);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  void set_zero();
  bool congruent(const Network& net) const;
  bool all_finite() const;
  double squared_norm() const;
  ParamGradient& operator+=(const ParamGradient& other);
  ParamGradient& operator*=(double s);

 private:
  std::vector<Layer> layers_;
};

enum class OptimizerKind { Adam, Sgd };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 50;
  int batch_size = 256;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Throws ConfigError unless every value is strictly positive.
  void validate() const;
};

struct OptimizerState {
  ParamGradient first_moment;
  ParamGradient second_moment;
  long step = 0;

  static OptimizerState for_network(const Network& net);
};

/// One optimizer update. Throws ShapeError on incongruent shapes and
/// NonFiniteError when the gradient has a NaN or infinity.
void train_step(Network& net, const ParamGradient& grad, const TrainConfig& config,
                OptimizerState& state);

// Checkpoint: version-tagged text record of widths, activation and row-major
// weights/biases printed with round-trip precision.
void save_checkpoint(const Network& net, std::ostream& out);
Network load_checkpoint(std::istream& in);
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace fnascent::nn
