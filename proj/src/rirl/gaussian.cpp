#include "rirl/gaussian.hpp"

#include <cmath>
#include <string>

#include "rirl/error.hpp"

namespace rirl::explore {

GaussianStats gaussian_stats(const Matrix& batch) {
  if (batch.cols() < 2)
    throw EstimationError("gaussian_stats: batch of " + std::to_string(batch.cols()) + " is smaller than 2");
  GaussianStats s;
  s.mean = batch.rowwise().mean();
  s.variance = (batch.colwise() - s.mean).array().square().rowwise().mean();
  s.variance = s.variance.cwiseMax(kVarianceFloor);
  return s;
}

double gaussian_kld(const GaussianStats& p, const GaussianStats& q) {
  if (p.mean.size() != q.mean.size() || p.variance.size() != q.variance.size() || p.mean.size() != p.variance.size())
    throw ShapeError("gaussian_kld: dimension mismatch");
  double sum = 0.0;
  for (nn::Index d = 0; d < p.mean.size(); ++d) {
    const double diff = p.mean(d) - q.mean(d);
    sum += 0.5 * (std::log(q.variance(d) / p.variance(d)) + (p.variance(d) + diff * diff) / q.variance(d) - 1.0);
  }
  return sum;
}

Matrix gaussian_kld_grad(const Matrix& batch, const GaussianStats& q) {
  const auto n = static_cast<double>(batch.cols());
  const Vector mean = batch.rowwise().mean();
  const Vector raw_var = (batch.colwise() - mean).array().square().rowwise().mean();
  Matrix grad(batch.rows(), batch.cols());
  for (nn::Index d = 0; d < batch.rows(); ++d) {
    const double dmean = (mean(d) - q.mean(d)) / q.variance(d);
    const bool floored = raw_var(d) < kVarianceFloor;
    const double dvar = floored ? 0.0 : 0.5 * (1.0 / q.variance(d) - 1.0 / raw_var(d));
    for (nn::Index b = 0; b < batch.cols(); ++b)
      grad(d, b) = dmean / n + dvar * 2.0 * (batch(d, b) - mean(d)) / n;
  }
  return grad;
}

}  // namespace rirl::explore
