#pragma once

// Greedy latent-space DAG search. Each round scores every open candidate edge
// by its KLD gain, selects the smallest, and invalidates cached scores for the
// selected edge's effect node.

#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "rirl/relation.hpp"

namespace rirl::explore {

struct Edge {
  std::string cause;
  std::string effect;

  std::string label() const { return cause + "->" + effect; }
  auto operator<=>(const Edge&) const = default;
};

/// node -> allowed parents
using CandidateMap = std::map<std::string, std::set<std::string>>;

/// Every forward pair (earlier node -> later node) in the given order.
CandidateMap forward_candidate_map(const std::vector<std::string>& nodes);
/// Exactly the listed edges.
CandidateMap candidate_map_from_edges(const std::vector<Edge>& edges);
CandidateMap parse_candidate_map(const nlohmann::json& doc);
nlohmann::json candidate_map_to_json(const CandidateMap& map);

/// Causal strength K(beta, n); lower is stronger. `causes` is sorted and non-empty.
class StrengthOracle {
 public:
  virtual ~StrengthOracle() = default;
  virtual double strength(const std::vector<std::string>& causes, const std::string& effect) = 0;
  /// Hint listing the strengths the next round will ask for.
  virtual void prepare(const std::vector<std::pair<std::vector<std::string>, std::string>>& /*requests*/) {}
};

/// Fixed strengths keyed by relation id ("B,C->D"). Unknown ids are an exploration error.
class TableOracle : public StrengthOracle {
 public:
  explicit TableOracle(std::map<std::string, double> values) : values_(std::move(values)) {}
  double strength(const std::vector<std::string>& causes, const std::string& effect) override;

 private:
  std::map<std::string, double> values_;
};

/// Trains a micro-causal model per requested cause set and scores it on held-out data.
class TrainingOracle : public StrengthOracle {
 public:
  TrainingOracle(const relation::NodeBank& bank, relation::EdgeTrainConfig config, int workers);
  double strength(const std::vector<std::string>& causes, const std::string& effect) override;
  void prepare(const std::vector<std::pair<std::vector<std::string>, std::string>>& requests) override;

  const std::map<std::string, std::shared_ptr<const relation::MicroCausalModel>>& models() const { return models_; }
  std::shared_ptr<const relation::MicroCausalModel> model(const std::string& id) const;
  std::size_t trainings() const { return trainings_; }

 private:
  const relation::NodeBank& bank_;
  relation::EdgeTrainConfig config_;
  int workers_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const relation::MicroCausalModel>> models_;
  std::size_t trainings_ = 0;
};

struct CandidateEval {
  Edge edge;
  std::vector<std::string> beta;  // selected parents of the effect when scored
  double k_with = 0.0;
  double k_without = 0.0;
  double delta = 0.0;
  int round = 0;
  bool stale = false;
};

struct RoundEntry {
  Edge edge;
  double k_with = 0.0;
  double k_without = 0.0;
  double delta = 0.0;
  bool selected = false;
  bool trimmed = false;
  bool newly = false;
};

struct RoundLog {
  int round = 0;
  std::vector<RoundEntry> entries;  // sorted by edge
  Edge selected;
};

struct ExploreConfig {
  double gain_threshold = std::numeric_limits<double>::infinity();
  int max_rounds = 64;
};

struct ExplorationState {
  std::vector<std::string> nodes;
  std::set<std::string> reachable;
  std::vector<Edge> edges;
  std::map<Edge, CandidateEval> cache;
  std::vector<RoundLog> rounds;
  std::size_t reused = 0;
  std::size_t evaluated = 0;
  std::size_t stale_reuse = 0;  // must stay 0

  std::vector<std::string> parents(const std::string& node) const;
};

/// K(beta u {p}, n) - K(beta, n), with K(empty, n) = 0.
double kld_gain(StrengthOracle& oracle, const std::vector<std::string>& beta, const std::string& p,
                const std::string& n);

ExplorationState explore(const std::vector<std::string>& nodes, const CandidateMap& candidates, StrengthOracle& oracle,
                         const ExploreConfig& config = {});

/// One row per round, one column per candidate edge ever seen. Cells hold
/// the gain followed by ";" and marker letters: S selected, T trimmed, N newly added.
std::string round_log_csv(const ExplorationState& state);
std::string round_log_text(const ExplorationState& state);

bool is_acyclic(const std::vector<std::string>& nodes, const std::vector<Edge>& edges);

}  // namespace rirl::explore
