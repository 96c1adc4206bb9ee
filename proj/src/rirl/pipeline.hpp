#pragma once

// End-to-end commands: generate data, initialize node models, train one
// relation, explore a DAG, and render reports from a finished run.

#include <ostream>
#include <string>
#include <vector>

#include "rirl/config.hpp"
#include "rirl/explore.hpp"
#include "rirl/metrics.hpp"

namespace rirl::pipeline {

/// Table-1 style summary of every node (no model metrics).
std::vector<metrics::NodeSummaryRow> summarize(const data::Dataset& data);

std::vector<metrics::NodeSummaryRow> cmd_synth(const std::string& spec_path, int days, std::uint64_t seed,
                                               const std::string& out_csv);

data::Dataset load_dataset(const RunConfig& config);
std::string node_model_path(const RunConfig& config, const std::string& node);
std::string relation_model_path(const RunConfig& config, const std::string& relation_id);
/// Loads every node model named by the dataset.
relation::NodeBank load_bank(const RunConfig& config, const data::Dataset& data);

/// Trains and saves one autoencoder per node; writes `<reports>/table1.csv`.
std::vector<metrics::NodeSummaryRow> cmd_init(const RunConfig& config, std::ostream* log = nullptr);

/// Trains one relation; saves it and merges its row into `<reports>/table4.csv`.
metrics::MetricRow cmd_edge(const RunConfig& config, const std::vector<std::string>& causes, const std::string& effect,
                            std::ostream* log = nullptr);

struct ExploreOutcome {
  std::vector<explore::Edge> edges;
  std::size_t trainings = 0;
  std::size_t reused = 0;
  std::string run_dir;
};

/// Empty `candidates_path` means every forward pair in data column order.
ExploreOutcome cmd_explore(const RunConfig& config, const std::string& candidates_path, const std::string& run_dir,
                           std::ostream* log = nullptr);

/// `format` is "csv" or "svg". Returns the files written.
std::vector<std::string> cmd_report(const std::string& run_dir, const std::string& format, const std::string& out_dir);

/// Runs exploration on an already built bank and writes the run directory.
ExploreOutcome explore_run(const RunConfig& config, const relation::NodeBank& bank,
                           const std::vector<std::string>& nodes, const explore::CandidateMap& candidates,
                           const std::string& run_dir, std::ostream* log = nullptr);

}  // namespace rirl::pipeline
