#include "rirl/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rirl/error.hpp"

namespace rirl::coupling {

double Key::scale(double x) const { return scale_outer * std::tanh(scale_inner * x); }
double Key::shift(double x) const { return shift_outer * std::tanh(shift_inner * x); }

double Key::scale_deriv(double x) const {
  const double th = std::tanh(scale_inner * x);
  return scale_outer * scale_inner * (1.0 - th * th);
}

double Key::shift_deriv(double x) const {
  const double th = std::tanh(shift_inner * x);
  return shift_outer * shift_inner * (1.0 - th * th);
}

std::vector<Key> make_keys(std::uint64_t seed, int count) {
  if (count < 1) throw ConfigError("make_keys: key count must be >= 1, got " + std::to_string(count));
  std::vector<Key> keys;
  keys.reserve(static_cast<std::size_t>(count));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int k = 0; k < count; ++k) {
    Key key;
    key.key_id = k;
    key.seed = substream_seed(seed, "coupling.key." + std::to_string(k));
    Rng rng(key.seed);
    key.scale_inner = unit(rng);
    key.scale_outer = unit(rng);
    key.shift_inner = unit(rng);
    key.shift_outer = unit(rng);
    key.scale_outer = std::clamp(key.scale_outer, -kMaxScaleGain, kMaxScaleGain);
    keys.push_back(key);
  }
  return keys;
}

double eta(double xi, double xj, const Key& key) { return xj * std::exp(key.scale(xi)) + key.shift(xi); }

double eta_inv(double yi, double yj, const Key& key) {
  return (yj - key.shift(yi)) * std::exp(-key.scale(yi));
}

Index grid_side(Index length, std::size_t num_keys) {
  const Index k = static_cast<Index>(num_keys);
  if (k < 1 || length % k != 0)
    throw ShapeError("expanded length " + std::to_string(length) + " is not divisible into " +
                     std::to_string(num_keys) + " grids");
  const Index per_key = length / k;
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(per_key))));
  if (side * side != per_key || side < 2)
    throw ShapeError("expanded grid of " + std::to_string(per_key) + " cells is not a square of side >= 2");
  return side;
}

Matrix expand(const Matrix& batch, const std::vector<Key>& keys) {
  if (keys.empty()) throw ShapeError("expand: no keys");
  const Index n = batch.rows();
  if (n < 2) throw ShapeError("expand: input length must be >= 2");
  const Index cells = n * n;
  Matrix out(static_cast<Index>(keys.size()) * cells, batch.cols());
  std::vector<double> gain(static_cast<std::size_t>(n));
  std::vector<double> offset(static_cast<std::size_t>(n));
  for (Index col = 0; col < batch.cols(); ++col) {
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const Key& key = keys[k];
      for (Index i = 0; i < n; ++i) {
        gain[static_cast<std::size_t>(i)] = std::exp(key.scale(batch(i, col)));
        offset[static_cast<std::size_t>(i)] = key.shift(batch(i, col));
      }
      const Index base = static_cast<Index>(k) * cells;
      for (Index i = 0; i < n; ++i) {
        const double g = gain[static_cast<std::size_t>(i)];
        const double o = offset[static_cast<std::size_t>(i)];
        for (Index j = 0; j < n; ++j)
          out(base + i * n + j, col) = (i == j) ? batch(i, col) : batch(j, col) * g + o;
      }
    }
  }
  return out;
}

Vector expand(const Vector& x, const std::vector<Key>& keys) {
  return expand(Matrix(x), keys).col(0);
}

Matrix reduce(const Matrix& expanded, const std::vector<Key>& keys) {
  const Index n = grid_side(expanded.rows(), keys.size());
  const Index cells = n * n;
  const double norm = 1.0 / static_cast<double>(static_cast<Index>(keys.size()) * n);
  Matrix out = Matrix::Zero(n, expanded.cols());
  for (Index col = 0; col < expanded.cols(); ++col) {
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const Key& key = keys[k];
      const Index base = static_cast<Index>(k) * cells;
      for (Index i = 0; i < n; ++i) {
        const double cond = expanded(base + i * n + i, col);
        const double inv_gain = std::exp(-key.scale(cond));
        const double offset = key.shift(cond);
        for (Index j = 0; j < n; ++j) {
          const double y = expanded(base + i * n + j, col);
          out(j, col) += (i == j) ? y : (y - offset) * inv_gain;
        }
      }
    }
  }
  return out * norm;
}

Vector reduce(const Vector& expanded, const std::vector<Key>& keys) {
  return reduce(Matrix(expanded), keys).col(0);
}

Matrix reduce_backward(const Matrix& expanded, const std::vector<Key>& keys, const Matrix& grad_reduced) {
  const Index n = grid_side(expanded.rows(), keys.size());
  if (grad_reduced.rows() != n || grad_reduced.cols() != expanded.cols())
    throw ShapeError("reduce_backward: gradient shape mismatch");
  const Index cells = n * n;
  const double norm = 1.0 / static_cast<double>(static_cast<Index>(keys.size()) * n);
  Matrix grad(expanded.rows(), expanded.cols());
  for (Index col = 0; col < expanded.cols(); ++col) {
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const Key& key = keys[k];
      const Index base = static_cast<Index>(k) * cells;
      for (Index i = 0; i < n; ++i) {
        const double cond = expanded(base + i * n + i, col);
        const double inv_gain = std::exp(-key.scale(cond));
        const double offset = key.shift(cond);
        const double ds = key.scale_deriv(cond);
        const double dt = key.shift_deriv(cond);
        double cond_grad = norm * grad_reduced(i, col);
        for (Index j = 0; j < n; ++j) {
          if (j == i) continue;
          const double g = norm * grad_reduced(j, col);
          const double y = expanded(base + i * n + j, col);
          grad(base + i * n + j, col) = g * inv_gain;
          cond_grad += g * inv_gain * (-dt - (y - offset) * ds);
        }
        grad(base + i * n + i, col) = cond_grad;
      }
    }
  }
  return grad;
}

}  // namespace rirl::coupling
