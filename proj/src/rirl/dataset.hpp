#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rirl/nn.hpp"

namespace rirl::data {

using nn::Index;
using nn::Matrix;
using nn::Vector;

/// Per-attribute z-score fitted over non-zero (unmasked) entries only.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t dim() const { return mean.size(); }
  bool operator==(const Scaler&) const = default;
};

/// Observable node: `values` and `mask` are attributes x time steps.
struct NodeSeries {
  std::string name;
  Matrix values;
  Matrix mask;
  std::vector<int> month;  // 1..12 per step
  Scaler scaler;

  Index length() const { return values.cols(); }
  Index dim() const { return values.rows(); }
  std::string attribute_name(Index a) const { return name + "." + std::to_string(a + 1); }
};

struct Dataset {
  std::vector<std::chrono::sys_days> dates;
  std::vector<NodeSeries> nodes;

  Index length() const { return static_cast<Index>(dates.size()); }
  const NodeSeries& node(const std::string& name) const;
  NodeSeries& node(const std::string& name);
  bool has_node(const std::string& name) const;
  std::vector<std::string> node_names() const;
};

Matrix mask_of(const Matrix& values);

/// Throws DataError naming the attribute when its unmasked entries have zero spread.
Scaler scale_fit(const NodeSeries& series);
/// Masked entries map to 0 in both directions.
Matrix scale_apply(const Scaler& scaler, const Matrix& values, const Matrix& mask);
Matrix scale_invert(const Scaler& scaler, const Matrix& scaled, const Matrix& mask);

/// Contiguous time blocks, remainder spread over the leading blocks.
struct FoldPlan {
  int k = 0;
  std::vector<std::pair<Index, Index>> blocks;  // [begin, end)
};

FoldPlan kfold_split(Index steps, int k);

// --- synthetic generator -------------------------------------------------

struct NodeSpec {
  std::string name;
  int dim = 1;
  double nonzero_rate = 1.0;
  double seasonal_amplitude = 1.0;
};

struct EdgeSpec {
  std::string cause;
  std::string effect;
  int tier = 1;
  int lag = 1;
  double gain = 0.0;
};

inline constexpr double kDefaultTierGain[3] = {3.0, 1.5, 0.6};

struct DagSpec {
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;
  std::uint64_t seed = 0;

  /// Throws ConfigError on unknown names, bad dimensions, tier-gain ordering or cycles.
  void validate() const;
  /// Node indices in a topological order that keeps the declared order where free.
  std::vector<std::size_t> topological_order() const;
  std::size_t index_of(const std::string& name) const;
};

DagSpec dag_spec_from_json(const nlohmann::json& doc);
nlohmann::json dag_spec_to_json(const DagSpec& spec);
DagSpec load_dag_spec(const std::string& path);

struct EdgeContribution {
  std::string cause;
  std::string effect;
  int tier = 0;
  double mean_abs = 0.0;
};

struct SynthOptions {
  double ar_coef = 0.7;
  std::set<std::string> ablate;  // nodes whose series are zeroed before children read them
  std::chrono::sys_days start = std::chrono::sys_days{std::chrono::year{2000} / 1 / 1};
};

struct SynthResult {
  Dataset data;
  std::vector<EdgeContribution> contributions;
};

SynthResult synth_generate(const DagSpec& spec, int days, std::uint64_t seed, const SynthOptions& options = {});

// --- CSV -------------------------------------------------------------------

void save_csv(const Dataset& data, const std::string& path);
/// `required` lists node names that must be present.
Dataset load_csv(const std::string& path, const std::vector<std::string>& required = {});

std::string format_double(double v);
std::string format_date(std::chrono::sys_days day);

}  // namespace rirl::data
