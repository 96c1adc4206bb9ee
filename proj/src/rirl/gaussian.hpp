#pragma once

#include "rirl/nn.hpp"

namespace rirl::explore {

using nn::Matrix;
using nn::Vector;

inline constexpr double kVarianceFloor = 1e-6;

/// Diagonal Gaussian fitted to a batch of latents (population variance).
struct GaussianStats {
  Vector mean;
  Vector variance;  // each entry >= kVarianceFloor
};

/// `batch` holds one latent per column; needs at least 2 columns.
GaussianStats gaussian_stats(const Matrix& batch);

/// KL(p || q) for diagonal Gaussians.
double gaussian_kld(const GaussianStats& p, const GaussianStats& q);

/// d KL(stats(batch) || q) / d batch, zero through floored variances.
Matrix gaussian_kld_grad(const Matrix& batch, const GaussianStats& q);

}  // namespace rirl::explore
