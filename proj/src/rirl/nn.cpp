#include "rirl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rirl/error.hpp"

namespace rirl::nn {

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

namespace {

void apply_activation(Activation act, Matrix& z) {
  switch (act) {
    case Activation::identity: break;
    case Activation::tanh: z = z.array().tanh(); break;
    case Activation::relu: z = z.array().max(0.0); break;
    case Activation::sigmoid: z = (1.0 + (-z.array()).exp()).inverse(); break;
  }
}

// Derivative expressed through the activation output.
Matrix activation_grad(Activation act, const Matrix& out, const Matrix& grad_out) {
  switch (act) {
    case Activation::identity: return grad_out;
    case Activation::tanh: return grad_out.array() * (1.0 - out.array().square());
    case Activation::relu: return (out.array() > 0.0).select(grad_out, 0.0);
    case Activation::sigmoid: return grad_out.array() * out.array() * (1.0 - out.array());
  }
  return grad_out;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace

DenseLayer::DenseLayer(std::string layer_name, Index in, Index out, Activation act)
    : name(std::move(layer_name)),
      weights(Matrix::Zero(out, in)),
      bias(Vector::Zero(out)),
      activation(act),
      grad_weights(Matrix::Zero(out, in)),
      grad_bias(Vector::Zero(out)) {}

void DenseLayer::init_xavier(Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index c = 0; c < weights.cols(); ++c)
    for (Index r = 0; r < weights.rows(); ++r) weights(r, c) = dist(rng);
  bias.setZero();
}

Vector DenseLayer::forward(const Vector& input) const {
  if (input.size() != in_dim()) {
    throw ShapeError("layer '" + name + "': input length " + std::to_string(input.size()) +
                     ", expected " + std::to_string(in_dim()));
  }
  Matrix z = weights * input + bias;
  apply_activation(activation, z);
  return z;
}

Matrix DenseLayer::forward(const Matrix& input) const {
  if (input.rows() != in_dim()) {
    throw ShapeError("layer '" + name + "': input rows " + std::to_string(input.rows()) +
                     ", expected " + std::to_string(in_dim()));
  }
  Matrix z = weights * input;
  z.colwise() += bias;
  apply_activation(activation, z);
  return z;
}

Matrix DenseLayer::backward(const Matrix& input, const Matrix& output, const Matrix& grad_output) {
  require_same_shape(output, grad_output, "dense backward");
  return backward_preactivation(input, activation_grad(activation, output, grad_output));
}

Matrix DenseLayer::backward_preactivation(const Matrix& input, const Matrix& grad_pre) {
  if (grad_pre.rows() != out_dim() || grad_pre.cols() != input.cols() || input.rows() != in_dim())
    throw ShapeError("layer '" + name + "': backward shape mismatch");
  grad_weights.noalias() += grad_pre * input.transpose();
  grad_bias += grad_pre.rowwise().sum();
  return weights.transpose() * grad_pre;
}

void DenseLayer::zero_grad() {
  grad_weights.setZero(weights.rows(), weights.cols());
  grad_bias.setZero(bias.size());
}

void DenseLayer::collect(ParamList& out) {
  if (grad_weights.rows() != weights.rows() || grad_weights.cols() != weights.cols()) zero_grad();
  out.push_back({name + ".weights", weights.data(), grad_weights.data(),
                 static_cast<std::size_t>(weights.size())});
  out.push_back({name + ".bias", bias.data(), grad_bias.data(), static_cast<std::size_t>(bias.size())});
}

Vector dense_forward(const DenseLayer& layer, const Vector& input) { return layer.forward(input); }

Matrix Mlp::forward(const Matrix& input) const {
  Matrix x = input;
  for (const auto& layer : layers) x = layer.forward(x);
  return x;
}

Matrix Mlp::forward(const Matrix& input, MlpTrace& trace) const {
  trace.acts.clear();
  trace.acts.reserve(layers.size() + 1);
  trace.acts.push_back(input);
  for (const auto& layer : layers) trace.acts.push_back(layer.forward(trace.acts.back()));
  return trace.acts.back();
}

Matrix Mlp::backward(const MlpTrace& trace, const Matrix& grad_output) {
  Matrix g = grad_output;
  for (std::size_t i = layers.size(); i-- > 0;) g = layers[i].backward(trace.acts[i], trace.acts[i + 1], g);
  return g;
}

void Mlp::init_xavier(Rng& rng) {
  for (auto& layer : layers) layer.init_xavier(rng);
}

void Mlp::zero_grad() {
  for (auto& layer : layers) layer.zero_grad();
}

void Mlp::collect(ParamList& out) {
  for (auto& layer : layers) layer.collect(out);
}

double mse_loss(const Vector& pred, const Vector& target) {
  if (pred.size() != target.size()) throw ShapeError("mse_loss: length mismatch");
  return mse_loss(Matrix(pred), Matrix(target));
}

double mse_loss(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "mse_loss");
  if (pred.size() == 0) return 0.0;
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Matrix mse_grad(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "mse_grad");
  return (2.0 / static_cast<double>(pred.size())) * (pred - target);
}

double bce_loss(const Vector& prob, const Vector& target) {
  if (prob.size() != target.size()) throw ShapeError("bce_loss: length mismatch");
  return bce_loss(Matrix(prob), Matrix(target));
}

double bce_loss(const Matrix& prob, const Matrix& target) {
  require_same_shape(prob, target, "bce_loss");
  if (prob.size() == 0) return 0.0;
  double sum = 0.0;
  for (Index c = 0; c < prob.cols(); ++c) {
    for (Index r = 0; r < prob.rows(); ++r) {
      const double p = std::clamp(prob(r, c), kBceClamp, 1.0 - kBceClamp);
      const double b = target(r, c);
      sum -= b * std::log(p) + (1.0 - b) * std::log1p(-p);
    }
  }
  return sum / static_cast<double>(prob.size());
}

Matrix bce_logit_grad(const Matrix& prob, const Matrix& target) {
  require_same_shape(prob, target, "bce_grad");
  return (prob - target) / static_cast<double>(prob.size());
}

void Adam::step(const ParamList& params) {
  if (first_.empty()) {
    first_.reserve(params.size());
    second_.reserve(params.size());
    for (const auto& slot : params) {
      first_.push_back(Vector::Zero(static_cast<Index>(slot.size)));
      second_.push_back(Vector::Zero(static_cast<Index>(slot.size)));
    }
  }
  if (first_.size() != params.size()) throw ShapeError("adam: parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& slot = params[k];
    if (static_cast<std::size_t>(first_[k].size()) != slot.size)
      throw ShapeError("adam: slot '" + slot.name + "' changed size");
    for (std::size_t i = 0; i < slot.size; ++i) {
      if (!std::isfinite(slot.grad[i])) throw TrainingError("non-finite gradient in '" + slot.name + "'");
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& slot = params[k];
    Eigen::Map<Vector> value(slot.value, static_cast<Index>(slot.size));
    Eigen::Map<const Vector> grad(slot.grad, static_cast<Index>(slot.size));
    first_[k] = config_.beta1 * first_[k] + (1.0 - config_.beta1) * grad;
    second_[k] = config_.beta2 * second_[k] + (1.0 - config_.beta2) * grad.cwiseAbs2();
    value.array() -= config_.lr * (first_[k].array() / c1) /
                     ((second_[k].array() / c2).sqrt() + config_.eps);
  }
}

std::vector<Vector> snapshot(const ParamList& params) {
  std::vector<Vector> out;
  out.reserve(params.size());
  for (const auto& slot : params)
    out.emplace_back(Eigen::Map<const Vector>(slot.value, static_cast<Index>(slot.size)));
  return out;
}

void restore(const ParamList& params, const std::vector<Vector>& values) {
  for (std::size_t k = 0; k < params.size(); ++k)
    Eigen::Map<Vector>(params[k].value, static_cast<Index>(params[k].size)) = values[k];
}

void zero_grads(const ParamList& params) {
  for (const auto& slot : params) std::fill(slot.grad, slot.grad + slot.size, 0.0);
}

GradCheckResult grad_check(const ParamList& params, const std::function<double()>& loss,
                           const std::function<void()>& analytic, double eps,
                           std::size_t max_per_slot, std::uint64_t seed) {
  analytic();
  std::vector<Vector> grads;
  grads.reserve(params.size());
  for (const auto& slot : params)
    grads.emplace_back(Eigen::Map<const Vector>(slot.grad, static_cast<Index>(slot.size)));

  Rng rng(seed);
  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& slot = params[k];
    std::vector<std::size_t> indices(slot.size);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (max_per_slot > 0 && indices.size() > max_per_slot) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(max_per_slot);
    }
    for (std::size_t i : indices) {
      const double saved = slot.value[i];
      slot.value[i] = saved + eps;
      const double up = loss();
      slot.value[i] = saved - eps;
      const double down = loss();
      slot.value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw GradCheckError("grad_check: non-finite loss perturbing '" + slot.name + "'");
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = grads[k][static_cast<Index>(i)];
      // below this size a central difference is mostly rounding noise
      const double resolution = 1e4 * std::numeric_limits<double>::epsilon() *
                                std::max({1.0, std::abs(up), std::abs(down)}) / eps;
      const double denom = std::max({std::abs(exact), std::abs(numeric), resolution});
      const double rel = std::abs(exact - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = slot.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace rirl::nn
