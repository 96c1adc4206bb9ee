#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include "rirl/dataset.hpp"
#include "rirl/error.hpp"
#include "rirl/rng.hpp"

namespace rirl::data {

using nlohmann::json;

std::size_t DagSpec::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].name == name) return i;
  throw ConfigError("dag spec: unknown node '" + name + "'");
}

void DagSpec::validate() const {
  if (nodes.empty()) throw ConfigError("dag spec: no nodes");
  std::set<std::string> names;
  for (const auto& n : nodes) {
    if (n.name.empty() || n.name.find_first_of(".,\" ") != std::string::npos)
      throw ConfigError("dag spec: invalid node name '" + n.name + "'");
    if (!names.insert(n.name).second) throw ConfigError("dag spec: duplicate node '" + n.name + "'");
    if (n.dim < 1 || n.dim > 12) throw ConfigError("dag spec: node '" + n.name + "' dimension must be in 1..12");
    if (!(n.nonzero_rate > 0.0 && n.nonzero_rate <= 1.0))
      throw ConfigError("dag spec: node '" + n.name + "' non-zero rate must be in (0, 1]");
  }
  double tier_min[3] = {INFINITY, INFINITY, INFINITY};
  double tier_max[3] = {0.0, 0.0, 0.0};
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : edges) {
    index_of(e.cause);
    index_of(e.effect);
    if (e.cause == e.effect) throw ConfigError("dag spec: self-loop on '" + e.cause + "'");
    if (!seen.insert({e.cause, e.effect}).second)
      throw ConfigError("dag spec: duplicate edge " + e.cause + "->" + e.effect);
    if (e.tier < 1 || e.tier > 3) throw ConfigError("dag spec: tier must be 1, 2 or 3");
    if (e.lag < 0) throw ConfigError("dag spec: negative lag on " + e.cause + "->" + e.effect);
    if (!(e.gain > 0.0)) throw ConfigError("dag spec: gain must be positive on " + e.cause + "->" + e.effect);
    tier_min[e.tier - 1] = std::min(tier_min[e.tier - 1], e.gain);
    tier_max[e.tier - 1] = std::max(tier_max[e.tier - 1], e.gain);
  }
  for (int t = 0; t < 2; ++t)
    for (int u = t + 1; u < 3; ++u)
      if (tier_max[u] > 0.0 && tier_min[t] < INFINITY && !(tier_min[t] > tier_max[u]))
        throw ConfigError("dag spec: tier " + std::to_string(t + 1) + " gains must exceed tier " +
                          std::to_string(u + 1) + " gains");
  topological_order();
}

std::vector<std::size_t> DagSpec::topological_order() const {
  const std::size_t n = nodes.size();
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<std::size_t>> children(n);
  for (const auto& e : edges) {
    const auto c = index_of(e.cause);
    const auto f = index_of(e.effect);
    children[c].push_back(f);
    ++indegree[f];
  }
  std::vector<std::size_t> order;
  std::vector<bool> done(n, false);
  while (order.size() < n) {
    bool progressed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (done[i] || indegree[i] != 0) continue;
      done[i] = true;
      order.push_back(i);
      for (auto c : children[i]) --indegree[c];
      progressed = true;
      break;
    }
    if (!progressed) throw ConfigError("dag spec: edges contain a cycle");
  }
  return order;
}

DagSpec dag_spec_from_json(const json& doc) {
  try {
    DagSpec spec;
    spec.seed = doc.value("seed", std::uint64_t{0});
    for (const auto& n : doc.at("nodes")) {
      NodeSpec node;
      node.name = n.at("name").get<std::string>();
      node.dim = n.at("dim").get<int>();
      node.nonzero_rate = n.value("nonzero_rate", 1.0);
      node.seasonal_amplitude = n.value("seasonal_amplitude", 1.0);
      spec.nodes.push_back(node);
    }
    if (doc.contains("edges")) {
      for (const auto& e : doc.at("edges")) {
        EdgeSpec edge;
        edge.cause = e.at("cause").get<std::string>();
        edge.effect = e.at("effect").get<std::string>();
        edge.tier = e.value("tier", 1);
        edge.lag = e.value("lag", 1);
        if (edge.tier < 1 || edge.tier > 3) throw ConfigError("dag spec: tier must be 1, 2 or 3");
        edge.gain = e.value("gain", kDefaultTierGain[edge.tier - 1]);
        spec.edges.push_back(edge);
      }
    }
    spec.validate();
    return spec;
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("dag spec: ") + ex.what());
  }
}

json dag_spec_to_json(const DagSpec& spec) {
  json doc;
  doc["seed"] = spec.seed;
  doc["nodes"] = json::array();
  for (const auto& n : spec.nodes)
    doc["nodes"].push_back(
        {{"name", n.name}, {"dim", n.dim}, {"nonzero_rate", n.nonzero_rate}, {"seasonal_amplitude", n.seasonal_amplitude}});
  doc["edges"] = json::array();
  for (const auto& e : spec.edges)
    doc["edges"].push_back(
        {{"cause", e.cause}, {"effect", e.effect}, {"tier", e.tier}, {"lag", e.lag}, {"gain", e.gain}});
  return doc;
}

DagSpec load_dag_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dag spec '" + path + "'");
  try {
    return dag_spec_from_json(json::parse(in));
  } catch (const json::parse_error& ex) {
    throw ConfigError("dag spec '" + path + "': " + ex.what());
  }
}

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// Standardized attribute mean of a parent, the signal children respond to.
Vector parent_signal(const Matrix& values) {
  Vector agg = values.colwise().mean().transpose();
  const double mean = agg.mean();
  const double var = (agg.array() - mean).square().mean();
  if (var < 1e-24) return Vector::Zero(agg.size());
  return (agg.array() - mean) / std::sqrt(var);
}

void apply_nonzero_rate(Matrix& values, double rate) {
  const Index steps = values.cols();
  const auto keep = static_cast<Index>(std::llround(rate * static_cast<double>(steps)));
  if (keep >= steps) return;
  std::vector<Index> order(static_cast<std::size_t>(steps));
  for (Index a = 0; a < values.rows(); ++a) {
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return values(a, x) > values(a, y); });
    for (std::size_t r = static_cast<std::size_t>(keep); r < order.size(); ++r) values(a, order[r]) = 0.0;
  }
}

}  // namespace

SynthResult synth_generate(const DagSpec& spec, int days, std::uint64_t seed, const SynthOptions& options) {
  spec.validate();
  if (days <= 0) throw ConfigError("synth: days must be positive");
  const Index steps = days;
  SynthResult result;
  Dataset& data = result.data;
  data.dates.reserve(static_cast<std::size_t>(steps));
  std::vector<int> months(static_cast<std::size_t>(steps));
  std::vector<double> day_of_year(static_cast<std::size_t>(steps));
  for (Index t = 0; t < steps; ++t) {
    const auto day = options.start + std::chrono::days{t};
    data.dates.push_back(day);
    const std::chrono::year_month_day ymd{day};
    months[static_cast<std::size_t>(t)] = static_cast<int>(static_cast<unsigned>(ymd.month()));
    const auto jan1 = std::chrono::sys_days{ymd.year() / 1 / 1};
    day_of_year[static_cast<std::size_t>(t)] = static_cast<double>((day - jan1).count());
  }

  const double phi = options.ar_coef;
  const double innov = std::sqrt(1.0 - phi * phi);
  std::map<std::string, Vector> signals;
  data.nodes.resize(spec.nodes.size());

  for (std::size_t idx : spec.topological_order()) {
    const NodeSpec& node = spec.nodes[idx];
    Rng rng = substream(seed, "synth.node." + node.name);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double phase = 365.0 * unit(rng);
    Matrix values(node.dim, steps);
    for (Index a = 0; a < node.dim; ++a) {
      const double amp = node.seasonal_amplitude * (0.75 + 0.5 * unit(rng));
      double noise = normal(rng);
      for (Index t = 0; t < steps; ++t) {
        if (t > 0) noise = phi * noise + innov * normal(rng);
        const double season =
            amp * std::sin(2.0 * std::numbers::pi * (day_of_year[static_cast<std::size_t>(t)] + phase) / 365.0);
        values(a, t) = season + noise;
      }
    }
    for (const auto& edge : spec.edges) {
      if (edge.effect != node.name) continue;
      Rng edge_rng = substream(seed, "synth.edge." + edge.cause + ">" + edge.effect);
      std::uniform_real_distribution<double> mix(0.5, 1.5);
      Vector weights(node.dim);
      for (Index a = 0; a < node.dim; ++a) weights(a) = mix(edge_rng);
      weights *= static_cast<double>(node.dim) / weights.sum();
      const Vector& signal = signals.at(edge.cause);
      double total_abs = 0.0;
      for (Index t = 0; t < steps; ++t) {
        const Index src = std::max<Index>(0, t - edge.lag);
        const double response = edge.gain * softplus(signal(src));
        for (Index a = 0; a < node.dim; ++a) {
          values(a, t) += weights(a) * response;
          total_abs += std::abs(weights(a) * response);
        }
      }
      result.contributions.push_back(
          {edge.cause, edge.effect, edge.tier, total_abs / static_cast<double>(steps * node.dim)});
    }
    apply_nonzero_rate(values, node.nonzero_rate);
    if (options.ablate.count(node.name)) values.setZero();

    NodeSeries& series = data.nodes[idx];
    series.name = node.name;
    series.values = values;
    series.mask = mask_of(values);
    series.month = months;
    try {
      series.scaler = scale_fit(series);
    } catch (const DataError&) {
      series.scaler = {};
    }
    signals[node.name] = parent_signal(values);
  }
  return result;
}

}  // namespace rirl::data
