#pragma once

// Expander / Reducer: a keyed pairwise coupling that lifts an L0-vector onto
// K full L0 x L0 grids and inverts it exactly.
//
// For key k and conditioner i, grid cell (i, j) holds
//   eta(x_i, x_j) = x_j * exp(s(x_i)) + t(x_i)     for i != j
//   x_i                                           for i == j
// with s(x) = g_s * tanh(a_s * x) and t(x) = g_t * tanh(a_t * x). The diagonal
// carries the conditioners through unchanged, so the inverse
//   x_j = (y_ij - t(y_ii)) * exp(-s(y_ii))
// needs no inverse of s or t.

#include <cstdint>
#include <vector>

#include "rirl/nn.hpp"

namespace rirl::coupling {

using nn::Index;
using nn::Matrix;
using nn::Vector;

inline constexpr double kMaxScaleGain = 2.0;

struct Key {
  int key_id = 0;
  std::uint64_t seed = 0;
  double scale_inner = 0.0;  // a_s
  double scale_outer = 0.0;  // g_s, |g_s| <= 2
  double shift_inner = 0.0;  // a_t
  double shift_outer = 0.0;  // g_t

  double scale(double x) const;
  double shift(double x) const;
  double scale_deriv(double x) const;
  double shift_deriv(double x) const;

  bool operator==(const Key&) const = default;
};

/// `count` keys, deterministic in `seed`. Weights are uniform in [-1, 1].
std::vector<Key> make_keys(std::uint64_t seed, int count);

double eta(double xi, double xj, const Key& key);
double eta_inv(double yi, double yj, const Key& key);

/// Grid side length for an expanded vector of `length` over `num_keys` keys.
Index grid_side(Index length, std::size_t num_keys);
inline Index expanded_length(Index input_len, std::size_t num_keys) {
  return static_cast<Index>(num_keys) * input_len * input_len;
}

/// Layout: key blocks in ascending key order, each block row-major over
/// (conditioner i, target j).
Vector expand(const Vector& x, const std::vector<Key>& keys);
Matrix expand(const Matrix& batch, const std::vector<Key>& keys);

/// Averages the K diagonal copies and all K * (L0 - 1) inverted off-diagonal
/// cells for each target coordinate.
Vector reduce(const Vector& expanded, const std::vector<Key>& keys);
Matrix reduce(const Matrix& expanded, const std::vector<Key>& keys);

/// dL/d(expanded) for the batched reduce, given dL/d(reduced).
Matrix reduce_backward(const Matrix& expanded, const std::vector<Key>& keys, const Matrix& grad_reduced);

}  // namespace rirl::coupling
