#include "rirl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rirl/dataset.hpp"
#include "rirl/error.hpp"

namespace rirl::metrics {

using data::format_double;

double rmse(const Matrix& pred, const Matrix& obs) {
  if (pred.rows() != obs.rows() || pred.cols() != obs.cols()) throw ShapeError("rmse: shape mismatch");
  if (pred.size() == 0) throw MetricError("rmse: empty input");
  return std::sqrt((pred - obs).squaredNorm() / static_cast<double>(pred.size()));
}

double nse(const Vector& pred, const Vector& obs) {
  if (pred.size() != obs.size()) throw ShapeError("nse: length mismatch");
  if (obs.size() < 2) throw MetricError("nse: need at least 2 points");
  const double mean = obs.mean();
  const double ss = (obs.array() - mean).square().sum();
  if (!(ss > 0.0)) throw MetricError("nse: observations are constant");
  return 1.0 - (obs - pred).squaredNorm() / ss;
}

namespace {

std::string fmt(double v) { return format_double(v); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw MetricError("bad number '" + text + "'");
    return v;
  } catch (const std::logic_error&) {
    throw MetricError("bad number '" + text + "'");
  }
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// RFC 4180 quoting for free-text cells
std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string node_table_csv(const std::vector<NodeSummaryRow>& rows) {
  if (rows.empty()) throw MetricError("node table: no rows");
  std::string out = "node,dim,mean,std,min,max,nonzero_rate_pct,rmse_scaled,rmse_unscaled,mask_bce\n";
  for (const auto& r : rows) {
    out += r.node + "," + std::to_string(r.dim) + "," + fmt(r.mean) + "," + fmt(r.stddev) + "," + fmt(r.min) + "," +
           fmt(r.max) + "," + fmt(r.nonzero_rate_pct);
    if (r.has_metrics)
      out += "," + fmt(r.rmse_scaled) + "," + fmt(r.rmse_unscaled) + "," + fmt(r.mask_bce) + "\n";
    else
      out += ",,,\n";
  }
  return out;
}

std::string metric_table_csv(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw MetricError("metric table: no rows");
  std::string out = "effect,causes,rmse_scaled,rmse_unscaled,mask_bce,kld\n";
  for (const auto& r : rows) {
    for (double v : {r.rmse_scaled, r.rmse_unscaled, r.mask_bce, r.kld})
      if (!std::isfinite(v)) throw MetricError("metric table: non-finite value for " + r.causes + "->" + r.effect);
    out += r.effect + "," + r.causes + "," + fmt(r.rmse_scaled) + "," + fmt(r.rmse_unscaled) + "," + fmt(r.mask_bce) +
           "," + fmt(r.kld) + "\n";
  }
  return out;
}

std::string discovery_table_csv(const std::vector<DiscoveryColumn>& columns) {
  if (columns.empty()) throw MetricError("discovery table: no edges");
  std::string head = "row";
  std::string kld = "KLD";
  std::string gain = "Gain";
  for (const auto& c : columns) {
    head += "," + c.edge;
    kld += "," + fmt(c.kld);
    gain += "," + fmt(c.gain);
  }
  return head + "\n" + kld + "\n" + gain + "\n";
}

std::vector<MetricRow> parse_metric_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "effect,causes,rmse_scaled,rmse_unscaled,mask_bce,kld")
    throw MetricError("metric table: unexpected header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 6) throw MetricError("metric table: ragged row '" + line + "'");
    rows.push_back({cells[0], cells[1], parse_number(cells[2]), parse_number(cells[3]), parse_number(cells[4]),
                    parse_number(cells[5])});
  }
  return rows;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw PersistenceError("write to '" + path + "' failed");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace {

void check_plot_input(const std::vector<double>& truth, const std::vector<PlotSeries>& lines) {
  if (truth.empty()) throw PlotError("plot: empty truth series");
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(truth)) throw PlotError("plot: non-finite truth value");
  for (const auto& l : lines) {
    if (l.values.empty()) throw PlotError("plot: empty series '" + l.label + "'");
    if (l.values.size() != truth.size()) throw PlotError("plot: series '" + l.label + "' length differs from truth");
    if (!finite(l.values)) throw PlotError("plot: non-finite value in series '" + l.label + "'");
  }
}

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_svg(const std::string& title, const std::vector<double>& truth, const std::vector<PlotSeries>& lines) {
  check_plot_input(truth, lines);
  constexpr double kWidth = 960, kHeight = 420, kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double lo = *std::min_element(truth.begin(), truth.end());
  double hi = *std::max_element(truth.begin(), truth.end());
  for (const auto& l : lines) {
    lo = std::min(lo, *std::min_element(l.values.begin(), l.values.end()));
    hi = std::max(hi, *std::max_element(l.values.begin(), l.values.end()));
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw PlotError("plot: non-finite values");
  if (hi == lo) {
    hi += 0.5;
    lo -= 0.5;
  }
  const std::size_t n = truth.size();
  auto px = [&](std::size_t i) { return kLeft + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : plot_w / 2); };
  auto py = [&](double v) { return kTop + plot_h * (hi - v) / (hi - lo); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
      << "</text>\n"
      << "<g stroke=\"black\" fill=\"none\">\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
      << kTop + plot_h << "\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h << "\"/>\n"
      << "</g>\n"
      << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">time step</text>\n"
      << "<text x=\"18\" y=\"" << kTop + plot_h / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 18 "
      << kTop + plot_h / 2 << ")\">value</text>\n"
      << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << coord(hi)
      << "</text>\n"
      << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + plot_h << "\" text-anchor=\"end\" font-size=\"10\">"
      << coord(lo) << "</text>\n";

  svg << "<g fill=\"black\">\n";
  for (std::size_t i = 0; i < n; ++i)
    svg << "<circle cx=\"" << coord(px(i)) << "\" cy=\"" << coord(py(truth[i])) << "\" r=\"1.5\"/>\n";
  svg << "</g>\n";

  for (std::size_t k = 0; k < lines.size(); ++k) {
    svg << "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"" << kPalette[k % std::size(kPalette)]
        << "\" points=\"";
    for (std::size_t i = 0; i < n; ++i) svg << (i ? " " : "") << coord(px(i)) << "," << coord(py(lines[k].values[i]));
    svg << "\"/>\n";
  }

  const double lx = kLeft + plot_w + 12;
  svg << "<g font-size=\"12\">\n"
      << "<circle cx=\"" << lx + 8 << "\" cy=\"" << kTop + 8 << "\" r=\"3\" fill=\"black\"/>"
      << "<text x=\"" << lx + 22 << "\" y=\"" << kTop + 12 << "\">truth</text>\n";
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const double y = kTop + 8 + 20.0 * static_cast<double>(k + 1);
    svg << "<line x1=\"" << lx << "\" y1=\"" << y << "\" x2=\"" << lx + 16 << "\" y2=\"" << y << "\" stroke=\""
        << kPalette[k % std::size(kPalette)] << "\" stroke-width=\"2\"/>"
        << "<text x=\"" << lx + 22 << "\" y=\"" << y + 4 << "\">" << xml_escape(lines[k].label) << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

std::string plot_csv(const std::vector<double>& truth, const std::vector<PlotSeries>& lines) {
  check_plot_input(truth, lines);
  std::string out = "step,truth";
  for (const auto& l : lines) out += "," + csv_field(l.label);
  out += "\n";
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out += std::to_string(i) + "," + fmt(truth[i]);
    for (const auto& l : lines) out += "," + fmt(l.values[i]);
    out += "\n";
  }
  return out;
}

void emit_plot(const std::string& title, const std::vector<double>& truth, const std::vector<PlotSeries>& lines,
               const std::string& stem) {
  const std::string svg = render_svg(title, truth, lines);
  const std::string csv = plot_csv(truth, lines);
  write_text(stem + ".svg", svg);
  write_text(stem + ".csv", csv);
}

}  // namespace rirl::metrics
