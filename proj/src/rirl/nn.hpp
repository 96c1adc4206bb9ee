#pragma once

// Small dense-network engine: layers with hand-written backward passes, losses,
// Adam, and a central-difference gradient checker. Batches are column-major:
// one sample per column.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rirl/rng.hpp"

namespace rirl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Activation { identity, tanh, relu, sigmoid };

const char* activation_name(Activation act);
Activation parse_activation(std::string_view name);

/// A contiguous block of trainable values and its gradient accumulator.
struct ParamSlot {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  std::size_t size = 0;
};
using ParamList = std::vector<ParamSlot>;

struct DenseLayer {
  std::string name;
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;
  Matrix grad_weights;
  Vector grad_bias;

  DenseLayer() = default;
  DenseLayer(std::string layer_name, Index in, Index out, Activation act);

  Index in_dim() const { return weights.cols(); }
  Index out_dim() const { return weights.rows(); }

  /// Glorot-uniform weights, zero bias.
  void init_xavier(Rng& rng);

  Vector forward(const Vector& input) const;
  Matrix forward(const Matrix& input) const;

  /// Accumulates parameter gradients from dL/d(output) and returns dL/d(input).
  /// `input` and `output` are the tensors of the matching forward call.
  Matrix backward(const Matrix& input, const Matrix& output, const Matrix& grad_output);
  /// Same, starting from dL/d(pre-activation).
  Matrix backward_preactivation(const Matrix& input, const Matrix& grad_pre);

  void zero_grad();
  void collect(ParamList& out);
};

Vector dense_forward(const DenseLayer& layer, const Vector& input);

/// Forward activations kept for the backward pass: acts[0] is the input,
/// acts[i + 1] the output of layer i.
struct MlpTrace {
  std::vector<Matrix> acts;
  const Matrix& output() const { return acts.back(); }
};

struct Mlp {
  std::vector<DenseLayer> layers;

  Index in_dim() const { return layers.front().in_dim(); }
  Index out_dim() const { return layers.back().out_dim(); }

  Matrix forward(const Matrix& input) const;
  Matrix forward(const Matrix& input, MlpTrace& trace) const;
  Matrix backward(const MlpTrace& trace, const Matrix& grad_output);

  void init_xavier(Rng& rng);
  void zero_grad();
  void collect(ParamList& out);
};

// Losses. Matrix forms average over every entry; *_grad returns dL/dpred.
double mse_loss(const Vector& pred, const Vector& target);
double mse_loss(const Matrix& pred, const Matrix& target);
Matrix mse_grad(const Matrix& pred, const Matrix& target);

inline constexpr double kBceClamp = 1e-7;
double bce_loss(const Vector& prob, const Vector& target);
double bce_loss(const Matrix& prob, const Matrix& target);
/// Gradient with respect to the pre-sigmoid logits, which is (p - b) / n.
Matrix bce_logit_grad(const Matrix& prob, const Matrix& target);

struct LossWeights {
  double mask = 1.0;
  double kld = 0.1;
};

struct LossReport {
  double value = 0.0;
  double mask = 0.0;
  double kld = 0.0;
  double total = 0.0;

  static LossReport combine(double value, double mask, double kld, const LossWeights& w) {
    return {value, mask, kld, value + w.mask * mask + w.kld * kld};
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one bias-corrected update to every slot. Throws TrainingError
  /// naming the slot if any gradient is non-finite; nothing is updated then.
  void step(const ParamList& params);

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::vector<Vector> first_;
  std::vector<Vector> second_;
};

/// Snapshot of parameter values, used to roll back a rejected step.
std::vector<Vector> snapshot(const ParamList& params);
void restore(const ParamList& params, const std::vector<Vector>& values);
void zero_grads(const ParamList& params);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
};

/// Compares analytic gradients against central differences. `loss` evaluates
/// the objective at the current parameters; `analytic` must zero and refill
/// the gradient slots. With `max_per_slot` > 0 a seeded subset of entries is
/// checked per slot. Errors are relative to the larger of both gradients,
/// floored at the rounding resolution of the central difference.
GradCheckResult grad_check(const ParamList& params, const std::function<double()>& loss,
                           const std::function<void()>& analytic, double eps = 1e-5,
                           std::size_t max_per_slot = 0, std::uint64_t seed = 0);

}  // namespace rirl::nn
