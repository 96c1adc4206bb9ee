#include "rirl/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <tuple>
#include <filesystem>
#include <thread>

#include "rirl/error.hpp"
#include "rirl/persistence.hpp"

namespace rirl::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Index;
using nn::Matrix;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw PersistenceError("cannot create directory '" + dir + "': " + ec.message());
}

std::string cause_label(const std::vector<std::string>& causes) {
  std::string out;
  for (std::size_t i = 0; i < causes.size(); ++i) out += (i ? "+" : "") + causes[i];
  return out;
}

metrics::MetricRow metric_row(const relation::MicroCausalModel& m) {
  return {m.relation.effect, cause_label(m.relation.causes), m.metrics.rmse_scaled, m.metrics.rmse_unscaled,
          m.metrics.mask_bce, m.metrics.kld};
}

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << "\n" << std::flush;
}

template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || count <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, count); ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

json rows_to_json(const std::vector<metrics::MetricRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"effect", r.effect},
                   {"causes", r.causes},
                   {"rmse_scaled", r.rmse_scaled},
                   {"rmse_unscaled", r.rmse_unscaled},
                   {"mask_bce", r.mask_bce},
                   {"kld", r.kld}});
  return out;
}

std::vector<metrics::MetricRow> rows_from_json(const json& doc) {
  std::vector<metrics::MetricRow> rows;
  try {
    for (const auto& r : doc)
      rows.push_back({r.at("effect").get<std::string>(), r.at("causes").get<std::string>(),
                      r.at("rmse_scaled").get<double>(), r.at("rmse_unscaled").get<double>(),
                      r.at("mask_bce").get<double>(), r.at("kld").get<double>()});
  } catch (const json::exception& e) {
    throw PersistenceError(std::string("run record: bad metric rows: ") + e.what());
  }
  return rows;
}

}  // namespace

std::vector<metrics::NodeSummaryRow> summarize(const data::Dataset& data) {
  std::vector<metrics::NodeSummaryRow> rows;
  for (const auto& n : data.nodes) {
    metrics::NodeSummaryRow r;
    r.node = n.name;
    r.dim = static_cast<int>(n.dim());
    const auto& v = n.values.array();
    r.mean = v.mean();
    r.stddev = std::sqrt((v - r.mean).square().mean());
    r.min = v.minCoeff();
    r.max = v.maxCoeff();
    r.nonzero_rate_pct = 100.0 * n.mask.mean();
    rows.push_back(r);
  }
  return rows;
}

std::vector<metrics::NodeSummaryRow> cmd_synth(const std::string& spec_path, int days, std::uint64_t seed,
                                               const std::string& out_csv) {
  if (days <= 0) throw ConfigError("days must be positive");
  const data::DagSpec spec = data::load_dag_spec(spec_path);
  const data::SynthResult result = data::synth_generate(spec, days, seed);
  const fs::path parent = fs::path(out_csv).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
  data::save_csv(result.data, out_csv);
  return summarize(result.data);
}

data::Dataset load_dataset(const RunConfig& config) {
  if (config.data.empty()) throw ConfigError("no data path configured");
  return data::load_csv(config.data);
}

std::string node_model_path(const RunConfig& config, const std::string& node) {
  return (fs::path(config.models) / (node + ".json")).string();
}

std::string relation_model_path(const RunConfig& config, const std::string& relation_id) {
  std::string name;
  for (std::size_t i = 0; i < relation_id.size(); ++i) {
    if (relation_id.compare(i, 2, "->") == 0) {
      name += "_to_";
      ++i;
    } else {
      name += relation_id[i] == ',' ? '+' : relation_id[i];
    }
  }
  return (fs::path(config.models) / "relations" / (name + ".json")).string();
}

relation::NodeBank load_bank(const RunConfig& config, const data::Dataset& data) {
  std::map<std::string, node::NodeAutoencoder> models;
  for (const auto& n : data.nodes) {
    node::NodeAutoencoder m = io::load_model(node_model_path(config, n.name));
    if (m.node != n.name || m.dim != n.dim())
      throw PersistenceError("model file for '" + n.name + "' does not match the data");
    models.emplace(n.name, std::move(m));
  }
  return relation::NodeBank::build(data, std::move(models));
}

std::vector<metrics::NodeSummaryRow> cmd_init(const RunConfig& config, std::ostream* log) {
  config.validate();
  const data::Dataset data = load_dataset(config);
  const node::AutoencoderConfig ae = autoencoder_config(config);
  std::vector<std::optional<node::NodeTrainResult>> results(data.nodes.size());
  parallel_for(data.nodes.size(), config.workers,
               [&](std::size_t i) { results[i] = node::train_node_autoencoder(data.nodes[i], ae); });

  ensure_dir(config.models);
  ensure_dir(config.reports);
  auto rows = summarize(data);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = *results[i];
    io::save_model(r.model, node_model_path(config, r.model.node));
    rows[i].rmse_scaled = r.metrics.rmse_scaled;
    rows[i].rmse_unscaled = r.metrics.rmse_unscaled;
    rows[i].mask_bce = r.metrics.mask_bce;
    rows[i].has_metrics = true;
    say(log, "init " + r.model.node + ": rmse_scaled " + data::format_double(r.metrics.rmse_scaled) + ", nse " +
                 data::format_double(r.metrics.nse));
  }
  metrics::write_text((fs::path(config.reports) / "table1.csv").string(), metrics::node_table_csv(rows));
  return rows;
}

metrics::MetricRow cmd_edge(const RunConfig& config, const std::vector<std::string>& causes, const std::string& effect,
                            std::ostream* log) {
  config.validate();
  const data::Dataset data = load_dataset(config);
  for (const auto& n : causes)
    if (!data.has_node(n)) throw ConfigError("unknown node '" + n + "'");
  if (!data.has_node(effect)) throw ConfigError("unknown node '" + effect + "'");
  const relation::NodeBank bank = load_bank(config, data);
  const relation::MicroCausalModel model = relation::train_micro_causal(causes, effect, bank, edge_config(config));

  const std::string path = relation_model_path(config, model.id());
  ensure_dir(fs::path(path).parent_path().string());
  io::save_micro_model(model, path);

  const metrics::MetricRow row = metric_row(model);
  ensure_dir(config.reports);
  const std::string table = (fs::path(config.reports) / "table4.csv").string();
  std::vector<metrics::MetricRow> rows;
  if (fs::exists(table)) {
    try {
      rows = metrics::parse_metric_table_csv(metrics::read_text(table));
    } catch (const MetricError& e) {
      throw PersistenceError("'" + table + "': " + e.what());
    }
  }
  std::erase_if(rows, [&](const metrics::MetricRow& r) { return r.effect == row.effect && r.causes == row.causes; });
  rows.push_back(row);
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.effect, a.causes) < std::tie(b.effect, b.causes);
  });
  metrics::write_text(table, metrics::metric_table_csv(rows));
  say(log, "edge " + model.id() + ": kld " + data::format_double(row.kld) + ", rmse_scaled " +
               data::format_double(row.rmse_scaled) + ", nse " + data::format_double(model.metrics.nse));
  return row;
}

ExploreOutcome explore_run(const RunConfig& config, const relation::NodeBank& bank,
                           const std::vector<std::string>& nodes, const explore::CandidateMap& candidates,
                           const std::string& run_dir, std::ostream* log) {
  const relation::EdgeTrainConfig edge = edge_config(config);
  explore::TrainingOracle oracle(bank, edge, config.workers);
  const explore::ExplorationState state =
      explore::explore(nodes, candidates, oracle, {config.gain_threshold, config.max_rounds});
  for (const auto& r : state.rounds)
    say(log, "round " + std::to_string(r.round) + ": " + r.selected.label() + " (" +
                 std::to_string(r.entries.size()) + " candidates)");

  const fs::path dir(run_dir);
  ensure_dir((dir / "models").string());

  std::vector<metrics::DiscoveryColumn> discovery;
  for (const auto& r : state.rounds)
    for (const auto& e : r.entries)
      if (e.selected) discovery.push_back({e.edge.label(), e.k_with, e.delta});

  // Table-4 rows: the full parent set of each node, then any single-cause model trained along the way.
  std::vector<metrics::MetricRow> table4;
  json recon = json::object();
  for (const auto& n : nodes) {
    const auto parents = state.parents(n);
    if (parents.empty()) continue;
    const auto full = oracle.model(relation::relation_id(parents, n));
    if (!full) throw ExplorationError("no trained model for the parents of '" + n + "'");
    table4.push_back(metric_row(*full));
    if (parents.size() > 1)
      for (const auto& p : parents)
        if (const auto single = oracle.model(relation::relation_id({p}, n))) table4.push_back(metric_row(*single));

    // held-out reconstruction of the first attribute
    const auto steps = bank.tensor(n).length();
    const auto heldout = node::holdout_split(steps, edge.folds, -1, edge.window_n - 1).second;
    std::vector<const node::NodeTensors*> ct;
    for (const auto& c : full->relation.causes) ct.push_back(&bank.tensor(c));
    const Matrix v_hat = relation::predict_latents(*full, ct, heldout);
    const auto& init = bank.model(n);
    const auto& tensors = bank.tensor(n);
    node::DecoderPass own;
    init.decode(init.encode_expanded(init.expand(tensors.features(Eigen::all, heldout))), own);
    node::DecoderPass rel;
    full->effect.decode(v_hat, rel);
    auto unscale = [](const node::NodeAutoencoder& m, const node::DecoderPass& p) {
      const Matrix gate = (p.mask_prob.array() > node::kMaskThreshold).cast<double>();
      return data::scale_invert(m.scaler, node::defeaturize(p.recon, m.dim), gate);
    };
    const Matrix own_values = unscale(init, own);
    const Matrix rel_values = unscale(full->effect, rel);
    std::vector<double> truth;
    std::vector<double> a;
    std::vector<double> b;
    for (std::size_t j = 0; j < heldout.size(); ++j) {
      truth.push_back(tensors.values(0, heldout[j]));
      a.push_back(own_values(0, static_cast<Index>(j)));
      b.push_back(rel_values(0, static_cast<Index>(j)));
    }
    recon[n] = {{"attribute", n + ".1"},
                {"first_step", heldout.front()},
                {"truth", truth},
                {"initialized", a},
                {"full_cause", b},
                {"causes", cause_label(full->relation.causes)}};
    io::save_micro_model(*full, (dir / "models" / (n + ".json")).string());
  }

  json edges = json::array();
  std::string edges_csv = "order,cause,effect,kld,gain\n";
  for (std::size_t i = 0; i < state.edges.size(); ++i) {
    edges.push_back(state.edges[i].label());
    edges_csv += std::to_string(i + 1) + "," + state.edges[i].cause + "," + state.edges[i].effect + "," +
                 data::format_double(discovery[i].kld) + "," + data::format_double(discovery[i].gain) + "\n";
  }
  json disc = json::array();
  for (const auto& d : discovery) disc.push_back({{"edge", d.edge}, {"kld", d.kld}, {"gain", d.gain}});

  const json record = {{"schema_version", io::kSchemaVersion},
                       {"kind", "exploration_run"},
                       {"config", config.to_json()},
                       {"nodes", nodes},
                       {"candidates", explore::candidate_map_to_json(candidates)},
                       {"edges", edges},
                       {"discovery", disc},
                       {"table4", rows_to_json(table4)},
                       {"recon", recon},
                       {"counters",
                        {{"evaluated", state.evaluated},
                         {"reused", state.reused},
                         {"stale_reuse", state.stale_reuse},
                         {"trainings", oracle.trainings()}}}};

  metrics::write_text((dir / "edges.csv").string(), edges_csv);
  metrics::write_text((dir / "round_log.csv").string(), explore::round_log_csv(state));
  metrics::write_text((dir / "round_log.txt").string(), explore::round_log_text(state));
  if (!discovery.empty()) metrics::write_text((dir / "table3.csv").string(), metrics::discovery_table_csv(discovery));
  if (!table4.empty()) metrics::write_text((dir / "table4.csv").string(), metrics::metric_table_csv(table4));
  io::write_json((dir / "run.json").string(), record);

  return {state.edges, oracle.trainings(), state.reused, run_dir};
}

ExploreOutcome cmd_explore(const RunConfig& config, const std::string& candidates_path, const std::string& run_dir,
                           std::ostream* log) {
  config.validate();
  const data::Dataset data = load_dataset(config);
  const relation::NodeBank bank = load_bank(config, data);
  const auto nodes = data.node_names();
  explore::CandidateMap candidates;
  if (candidates_path.empty()) {
    candidates = explore::forward_candidate_map(nodes);
  } else {
    json doc;
    try {
      doc = io::read_json(candidates_path);
    } catch (const PersistenceError& e) {
      throw ConfigError(std::string("candidate map: ") + e.what());
    }
    candidates = explore::parse_candidate_map(doc);
  }
  return explore_run(config, bank, nodes, candidates, run_dir, log);
}

std::vector<std::string> cmd_report(const std::string& run_dir, const std::string& format, const std::string& out_dir) {
  if (format != "csv" && format != "svg") throw ConfigError("unknown report format '" + format + "' (csv or svg)");
  const fs::path dir(run_dir);
  const std::string record_path = (dir / "run.json").string();
  if (!fs::exists(record_path)) throw PersistenceError("no run record at '" + record_path + "'");
  const json record = io::read_json(record_path);
  if (!record.is_object() || record.value("kind", "") != "exploration_run" ||
      record.value("schema_version", 0) != io::kSchemaVersion)
    throw PersistenceError("'" + record_path + "' is not a supported run record");

  const std::string out = out_dir.empty() ? (dir / "report").string() : out_dir;
  ensure_dir(out);
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& text) {
    const std::string path = (fs::path(out) / name).string();
    metrics::write_text(path, text);
    written.push_back(path);
  };

  try {
    if (format == "csv") {
      std::vector<metrics::DiscoveryColumn> discovery;
      for (const auto& d : record.at("discovery"))
        discovery.push_back({d.at("edge").get<std::string>(), d.at("kld").get<double>(), d.at("gain").get<double>()});
      if (!discovery.empty()) put("table3.csv", metrics::discovery_table_csv(discovery));
      const auto rows = rows_from_json(record.at("table4"));
      if (!rows.empty()) put("table4.csv", metrics::metric_table_csv(rows));
      const std::string log_path = (dir / "round_log.csv").string();
      if (!fs::exists(log_path)) throw PersistenceError("run is missing '" + log_path + "'");
      put("round_log.csv", metrics::read_text(log_path));
    } else {
      for (const auto& [node, r] : record.at("recon").items()) {
        const auto truth = r.at("truth").get<std::vector<double>>();
        const std::vector<metrics::PlotSeries> lines = {
            {"initialized", r.at("initialized").get<std::vector<double>>()},
            {"full cause " + r.at("causes").get<std::string>(), r.at("full_cause").get<std::vector<double>>()}};
        const std::string stem = (fs::path(out) / (node + "_recon")).string();
        metrics::emit_plot(r.at("attribute").get<std::string>() + " held-out reconstruction", truth, lines, stem);
        written.push_back(stem + ".svg");
        written.push_back(stem + ".csv");
      }
    }
  } catch (const json::exception& e) {
    throw PersistenceError("'" + record_path + "': " + e.what());
  }
  return written;
}

}  // namespace rirl::pipeline
