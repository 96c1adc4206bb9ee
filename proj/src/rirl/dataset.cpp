#include "rirl/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "rirl/error.hpp"

namespace rirl::data {

const NodeSeries& Dataset::node(const std::string& name) const {
  for (const auto& n : nodes)
    if (n.name == name) return n;
  throw ConfigError("unknown node '" + name + "'");
}

NodeSeries& Dataset::node(const std::string& name) {
  for (auto& n : nodes)
    if (n.name == name) return n;
  throw ConfigError("unknown node '" + name + "'");
}

bool Dataset::has_node(const std::string& name) const {
  return std::any_of(nodes.begin(), nodes.end(), [&](const NodeSeries& n) { return n.name == name; });
}

std::vector<std::string> Dataset::node_names() const {
  std::vector<std::string> out;
  out.reserve(nodes.size());
  for (const auto& n : nodes) out.push_back(n.name);
  return out;
}

Matrix mask_of(const Matrix& values) { return (values.array() != 0.0).cast<double>(); }

Scaler scale_fit(const NodeSeries& series) {
  Scaler scaler;
  for (Index a = 0; a < series.dim(); ++a) {
    double sum = 0.0;
    double count = 0.0;
    for (Index t = 0; t < series.length(); ++t) {
      if (series.mask(a, t) != 0.0) {
        sum += series.values(a, t);
        count += 1.0;
      }
    }
    if (count < 2.0) throw DataError("attribute '" + series.attribute_name(a) + "' has fewer than 2 non-zero entries");
    const double mean = sum / count;
    double ss = 0.0;
    for (Index t = 0; t < series.length(); ++t) {
      if (series.mask(a, t) != 0.0) ss += (series.values(a, t) - mean) * (series.values(a, t) - mean);
    }
    const double sd = std::sqrt(ss / count);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
      throw DataError("attribute '" + series.attribute_name(a) + "' has zero standard deviation");
    scaler.mean.push_back(mean);
    scaler.stddev.push_back(sd);
  }
  return scaler;
}

Matrix scale_apply(const Scaler& scaler, const Matrix& values, const Matrix& mask) {
  if (static_cast<std::size_t>(values.rows()) != scaler.dim() || mask.rows() != values.rows() ||
      mask.cols() != values.cols())
    throw ShapeError("scale_apply: dimension mismatch");
  Matrix out(values.rows(), values.cols());
  for (Index t = 0; t < values.cols(); ++t)
    for (Index a = 0; a < values.rows(); ++a)
      out(a, t) = mask(a, t) != 0.0 ? (values(a, t) - scaler.mean[static_cast<std::size_t>(a)]) /
                                          scaler.stddev[static_cast<std::size_t>(a)]
                                    : 0.0;
  return out;
}

Matrix scale_invert(const Scaler& scaler, const Matrix& scaled, const Matrix& mask) {
  if (static_cast<std::size_t>(scaled.rows()) != scaler.dim() || mask.rows() != scaled.rows() ||
      mask.cols() != scaled.cols())
    throw ShapeError("scale_invert: dimension mismatch");
  Matrix out(scaled.rows(), scaled.cols());
  for (Index t = 0; t < scaled.cols(); ++t)
    for (Index a = 0; a < scaled.rows(); ++a)
      out(a, t) = mask(a, t) != 0.0 ? scaled(a, t) * scaler.stddev[static_cast<std::size_t>(a)] +
                                          scaler.mean[static_cast<std::size_t>(a)]
                                    : 0.0;
  return out;
}

FoldPlan kfold_split(Index steps, int k) {
  if (k < 2) throw ConfigError("kfold_split: k must be >= 2");
  if (steps < 10 * static_cast<Index>(k))
    throw ConfigError("kfold_split: " + std::to_string(steps) + " steps is too short for " + std::to_string(k) +
                      " folds");
  FoldPlan plan;
  plan.k = k;
  const Index base = steps / k;
  const Index extra = steps % k;
  Index begin = 0;
  for (int f = 0; f < k; ++f) {
    const Index len = base + (f < extra ? 1 : 0);
    plan.blocks.emplace_back(begin, begin + len);
    begin += len;
  }
  return plan;
}

}  // namespace rirl::data
