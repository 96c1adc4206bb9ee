// rirl command-line front end. Talks to the library only through rirl.h.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rirl/rirl.h"

namespace {

const std::vector<std::string> kConfigKeys = {
    "latent_dim", "num_keys",   "window_n",   "window_m",    "lr",    "epochs",     "edge_epochs",
    "hidden",     "batch_size", "lambda_kld", "lambda_mask", "folds", "eval_folds", "gain_threshold",
    "max_rounds", "seed",       "workers",    "data",        "models", "reports"};

struct Owned {
  char* text = nullptr;
  ~Owned() { rirl_string_free(text); }
  std::string str() const { return text ? text : ""; }
};

int report_failure(rirl_status status) {
  std::cerr << "rirl: " << rirl_status_name(status) << " error: " << rirl_last_error() << "\n";
  return static_cast<int>(status);
}

// Prints a CSV block as aligned columns.
void print_table(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (!cell.empty() && end && *end == '\0' && cell.size() > 8) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        cell = buf;
      }
      cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], r[i].size());
    }
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      line += r[i] + std::string(width[i] - r[i].size() + 2, ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    std::cout << line << "\n";
  }
}

void log_line(const char* line, void*) { std::cerr << line << "\n"; }

struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "flat key = value config file");
    for (const auto& key : kConfigKeys) cmd->add_option("--" + key, values[key], "override config key '" + key + "'");
  }

  // defaults, then RIRL_WORKERS, then the config file, then flags
  rirl_status build(rirl_config** out) const {
    rirl_status s = rirl_config_new(out);
    if (s != RIRL_OK) return s;
    if (const char* env = std::getenv("RIRL_WORKERS"); env && *env) {
      if ((s = rirl_config_set(*out, "workers", env)) != RIRL_OK) return s;
    }
    if (!file.empty() && (s = rirl_config_load(*out, file.c_str())) != RIRL_OK) return s;
    for (const auto& [key, value] : values)
      if (!value.empty() && (s = rirl_config_set(*out, key.c_str(), value.c_str())) != RIRL_OK) return s;
    rirl_config_set_log(*out, log_line, nullptr);
    return RIRL_OK;
  }
};

struct ConfigHandle {
  rirl_config* ptr = nullptr;
  ~ConfigHandle() { rirl_config_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relation-indexed representation learning and latent DAG exploration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rirl_version());

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset from a DAG spec");
  std::string spec_path;
  std::string synth_out;
  int days = 0;
  std::uint64_t synth_seed = 0;
  synth->add_option("--spec", spec_path, "DAG spec (JSON)")->required();
  synth->add_option("--days", days, "number of daily steps")->required();
  synth->add_option("--seed", synth_seed, "root seed");
  synth->add_option("--out", synth_out, "output CSV")->required();

  auto* init = app.add_subcommand("init", "train one node autoencoder per node");
  ConfigFlags init_flags;
  init_flags.attach(init);

  auto* edge = app.add_subcommand("edge", "train one cause-set -> effect relation");
  ConfigFlags edge_flags;
  edge_flags.attach(edge);
  std::string causes;
  std::string effect;
  edge->add_option("--causes", causes, "comma-separated cause nodes")->required();
  edge->add_option("--effect", effect, "effect node")->required();

  auto* explore = app.add_subcommand("explore", "greedy DAG exploration");
  ConfigFlags explore_flags;
  explore_flags.attach(explore);
  std::string candidates;
  std::string run_dir = "run";
  explore->add_option("--candidates", candidates, "candidate map (JSON node -> parent list); default all forward pairs");
  explore->add_option("--out", run_dir, "run directory");

  auto* report = app.add_subcommand("report", "render tables or plots from a run directory");
  std::string report_run;
  std::string format = "csv";
  std::string report_out;
  report->add_option("--run", report_run, "run directory")->required();
  report->add_option("--format", format, "csv or svg");
  report->add_option("--out", report_out, "output directory (default <run>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(RIRL_ERR_CONFIG);
  }

  Owned out;
  rirl_status status = RIRL_OK;
  ConfigHandle config;
  if (*synth) {
    status = rirl_synth(spec_path.c_str(), days, synth_seed, synth_out.c_str(), &out.text);
    if (status == RIRL_OK) print_table(out.str());
  } else if (*init) {
    status = init_flags.build(&config.ptr);
    if (status == RIRL_OK) status = rirl_init(config.ptr, &out.text);
    if (status == RIRL_OK) print_table(out.str());
  } else if (*edge) {
    status = edge_flags.build(&config.ptr);
    if (status == RIRL_OK) status = rirl_edge(config.ptr, causes.c_str(), effect.c_str(), &out.text);
    if (status == RIRL_OK) print_table(out.str());
  } else if (*explore) {
    status = explore_flags.build(&config.ptr);
    if (status == RIRL_OK)
      status = rirl_explore(config.ptr, candidates.empty() ? nullptr : candidates.c_str(), run_dir.c_str(), &out.text);
    if (status == RIRL_OK) std::cout << out.str();
  } else if (*report) {
    status = rirl_report(report_run.c_str(), format.c_str(), report_out.empty() ? nullptr : report_out.c_str(),
                         &out.text);
    if (status == RIRL_OK) std::cout << out.str();
  }
  return status == RIRL_OK ? 0 : report_failure(status);
}
