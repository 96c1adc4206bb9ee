#pragma once

#include <string>
#include <vector>

#include "rirl/nn.hpp"

namespace rirl::metrics {

using nn::Matrix;
using nn::Vector;

double rmse(const Matrix& pred, const Matrix& obs);

/// Nash-Sutcliffe efficiency: 1 - SSE / SS(obs about its mean). Needs at
/// least 2 points and non-constant observations.
double nse(const Vector& pred, const Vector& obs);

/// Relation-indexed reconstruction scores for one (cause set, effect) model.
struct MetricRow {
  std::string effect;
  std::string causes;  // e.g. "B+C"
  double rmse_scaled = 0.0;
  double rmse_unscaled = 0.0;
  double mask_bce = 0.0;
  double kld = 0.0;
};

/// Per-node initialization scores plus the series summary columns.
struct NodeSummaryRow {
  std::string node;
  int dim = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  double nonzero_rate_pct = 0.0;
  double rmse_scaled = 0.0;
  double rmse_unscaled = 0.0;
  double mask_bce = 0.0;
  bool has_metrics = false;
};

/// One discovered edge with its strength and gain, in discovery order.
struct DiscoveryColumn {
  std::string edge;  // "A->C"
  double kld = 0.0;
  double gain = 0.0;
};

std::string node_table_csv(const std::vector<NodeSummaryRow>& rows);
std::string metric_table_csv(const std::vector<MetricRow>& rows);
std::string discovery_table_csv(const std::vector<DiscoveryColumn>& columns);

std::vector<MetricRow> parse_metric_table_csv(const std::string& text);

/// Writes `text` to `path`, throwing PersistenceError on failure.
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

struct PlotSeries {
  std::string label;
  std::vector<double> values;
};

/// SVG line chart: truth as point markers, each labeled series as a polyline.
std::string render_svg(const std::string& title, const std::vector<double>& truth, const std::vector<PlotSeries>& lines);
std::string plot_csv(const std::vector<double>& truth, const std::vector<PlotSeries>& lines);
/// Writes `<stem>.svg` and `<stem>.csv`.
void emit_plot(const std::string& title, const std::vector<double>& truth, const std::vector<PlotSeries>& lines,
               const std::string& stem);

}  // namespace rirl::metrics
