#include "rirl/explore.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <thread>

#include "rirl/dataset.hpp"
#include "rirl/error.hpp"

namespace rirl::explore {

namespace {

std::string key_of(const std::vector<std::string>& causes, const std::string& effect) {
  return relation::relation_id(causes, effect);
}

std::string fixed4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

bool reaches(const std::map<std::string, std::vector<std::string>>& children, const std::string& from,
             const std::string& to) {
  std::vector<std::string> stack{from};
  std::set<std::string> seen;
  while (!stack.empty()) {
    const std::string cur = stack.back();
    stack.pop_back();
    if (cur == to) return true;
    if (!seen.insert(cur).second) continue;
    const auto it = children.find(cur);
    if (it != children.end()) stack.insert(stack.end(), it->second.begin(), it->second.end());
  }
  return false;
}

}  // namespace

CandidateMap forward_candidate_map(const std::vector<std::string>& nodes) {
  CandidateMap map;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    auto& parents = map[nodes[j]];
    for (std::size_t i = 0; i < j; ++i) parents.insert(nodes[i]);
  }
  return map;
}

CandidateMap candidate_map_from_edges(const std::vector<Edge>& edges) {
  CandidateMap map;
  for (const auto& e : edges) {
    if (e.cause == e.effect) throw ConfigError("candidate self-loop at '" + e.cause + "'");
    map[e.effect].insert(e.cause);
    map[e.cause];
  }
  return map;
}

CandidateMap parse_candidate_map(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("candidate map must be a JSON object of node -> parent list");
  CandidateMap map;
  for (const auto& [node, parents] : doc.items()) {
    if (!parents.is_array()) throw ConfigError("candidate parents of '" + node + "' must be a list");
    auto& set = map[node];
    for (const auto& p : parents) {
      if (!p.is_string()) throw ConfigError("candidate parent names must be strings");
      const std::string name = p.get<std::string>();
      if (name == node) throw ConfigError("candidate self-loop at '" + node + "'");
      set.insert(name);
    }
  }
  return map;
}

nlohmann::json candidate_map_to_json(const CandidateMap& map) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [node, parents] : map) doc[node] = std::vector<std::string>(parents.begin(), parents.end());
  return doc;
}

double TableOracle::strength(const std::vector<std::string>& causes, const std::string& effect) {
  const std::string id = key_of(causes, effect);
  const auto it = values_.find(id);
  if (it == values_.end()) throw ExplorationError("no strength for '" + id + "' and training is disabled");
  return it->second;
}

TrainingOracle::TrainingOracle(const relation::NodeBank& bank, relation::EdgeTrainConfig config, int workers)
    : bank_(bank), config_(config), workers_(std::max(1, workers)) {}

std::shared_ptr<const relation::MicroCausalModel> TrainingOracle::model(const std::string& id) const {
  const auto it = models_.find(id);
  return it == models_.end() ? nullptr : it->second;
}

double TrainingOracle::strength(const std::vector<std::string>& causes, const std::string& effect) {
  const std::string id = key_of(causes, effect);
  {
    std::lock_guard lock(mutex_);
    const auto it = models_.find(id);
    if (it != models_.end()) return it->second->metrics.kld;
  }
  auto trained = std::make_shared<const relation::MicroCausalModel>(
      relation::train_micro_causal(causes, effect, bank_, config_));
  std::lock_guard lock(mutex_);
  ++trainings_;
  return models_.emplace(id, std::move(trained)).first->second->metrics.kld;
}

void TrainingOracle::prepare(const std::vector<std::pair<std::vector<std::string>, std::string>>& requests) {
  std::vector<std::pair<std::vector<std::string>, std::string>> todo;
  {
    std::lock_guard lock(mutex_);
    std::set<std::string> ids;
    for (const auto& r : requests) {
      const std::string id = key_of(r.first, r.second);
      if (!models_.count(id) && ids.insert(id).second) todo.push_back(r);
    }
  }
  if (todo.empty()) return;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(todo.size());
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < todo.size();) {
      try {
        strength(todo[i].first, todo[i].second);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::min<int>(workers_, static_cast<int>(todo.size()));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  // first failure in request order, so errors do not depend on scheduling
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<std::string> ExplorationState::parents(const std::string& node) const {
  std::vector<std::string> out;
  for (const auto& e : edges)
    if (e.effect == node) out.push_back(e.cause);
  std::sort(out.begin(), out.end());
  return out;
}

double kld_gain(StrengthOracle& oracle, const std::vector<std::string>& beta, const std::string& p,
                const std::string& n) {
  std::vector<std::string> with = beta;
  with.push_back(p);
  std::sort(with.begin(), with.end());
  const double k_with = oracle.strength(with, n);
  const double k_without = beta.empty() ? 0.0 : oracle.strength(beta, n);
  return k_with - k_without;
}

bool is_acyclic(const std::vector<std::string>& nodes, const std::vector<Edge>& edges) {
  std::map<std::string, std::vector<std::string>> children;
  for (const auto& e : edges) children[e.cause].push_back(e.effect);
  for (const auto& e : edges)
    if (reaches(children, e.effect, e.cause)) return false;
  (void)nodes;
  return true;
}

ExplorationState explore(const std::vector<std::string>& nodes, const CandidateMap& candidates, StrengthOracle& oracle,
                         const ExploreConfig& config) {
  if (config.max_rounds < 1) throw ConfigError("max_rounds must be positive");
  const std::set<std::string> all(nodes.begin(), nodes.end());
  if (all.size() != nodes.size()) throw ConfigError("duplicate node names");
  for (const auto& [node, parents] : candidates) {
    if (!all.count(node)) throw ConfigError("candidate map names unknown node '" + node + "'");
    for (const auto& p : parents) {
      if (!all.count(p)) throw ConfigError("candidate map names unknown node '" + p + "'");
      if (p == node) throw ConfigError("candidate self-loop at '" + node + "'");
    }
  }

  ExplorationState state;
  state.nodes = nodes;
  for (const auto& n : nodes) {
    const auto it = candidates.find(n);
    if (it == candidates.end() || it->second.empty()) state.reachable.insert(n);
  }
  if (state.reachable.empty()) throw ExplorationError("no parentless node to start from");

  std::map<std::string, std::vector<std::string>> children;
  std::set<Edge> previous;
  for (int round = 1; round <= config.max_rounds; ++round) {
    std::vector<Edge> open;
    for (const auto& n : nodes) {
      const auto it = candidates.find(n);
      if (it == candidates.end()) continue;
      for (const auto& p : it->second) {
        const Edge e{p, n};
        if (!state.reachable.count(p)) continue;
        if (std::find(state.edges.begin(), state.edges.end(), e) != state.edges.end()) continue;
        if (reaches(children, n, p)) continue;
        open.push_back(e);
      }
    }
    std::sort(open.begin(), open.end());
    if (open.empty()) {
      if (round == 1) throw ExplorationError("no candidate edge leaves the starting nodes");
      break;
    }

    std::vector<std::pair<std::vector<std::string>, std::string>> wanted;
    for (const auto& e : open) {
      const auto it = state.cache.find(e);
      if (it != state.cache.end() && !it->second.stale) continue;
      auto beta = state.parents(e.effect);
      if (!beta.empty()) wanted.push_back({beta, e.effect});
      beta.push_back(e.cause);
      std::sort(beta.begin(), beta.end());
      wanted.push_back({beta, e.effect});
    }
    oracle.prepare(wanted);

    RoundLog log;
    log.round = round;
    for (const auto& e : open) {
      const auto beta = state.parents(e.effect);
      auto it = state.cache.find(e);
      if (it != state.cache.end() && !it->second.stale) {
        if (it->second.beta != beta) ++state.stale_reuse;
        ++state.reused;
      } else {
        CandidateEval ev;
        ev.edge = e;
        ev.beta = beta;
        ev.round = round;
        std::vector<std::string> with = beta;
        with.push_back(e.cause);
        std::sort(with.begin(), with.end());
        ev.k_with = oracle.strength(with, e.effect);
        ev.k_without = beta.empty() ? 0.0 : oracle.strength(beta, e.effect);
        ev.delta = ev.k_with - ev.k_without;
        if (!std::isfinite(ev.delta)) throw ExplorationError("non-finite strength for edge " + e.label());
        ++state.evaluated;
        it = state.cache.insert_or_assign(e, ev).first;
      }
      const CandidateEval& ev = it->second;
      log.entries.push_back({e, ev.k_with, ev.k_without, ev.delta, false, false, !previous.count(e)});
    }

    // ties resolve to the lexicographically first edge because entries are sorted
    std::size_t best = 0;
    for (std::size_t i = 1; i < log.entries.size(); ++i)
      if (log.entries[i].delta < log.entries[best].delta) best = i;
    if (state.reachable.size() == all.size() && log.entries[best].delta > config.gain_threshold) break;

    const Edge chosen = log.entries[best].edge;
    log.selected = chosen;
    for (auto& entry : log.entries) {
      entry.selected = entry.edge == chosen;
      entry.trimmed = !entry.selected && entry.edge.effect == chosen.effect;
    }
    state.edges.push_back(chosen);
    children[chosen.cause].push_back(chosen.effect);
    state.reachable.insert(chosen.effect);
    for (auto& [edge, ev] : state.cache)
      if (edge.effect == chosen.effect) ev.stale = true;
    if (!is_acyclic(nodes, state.edges)) throw ExplorationError("selected edges form a cycle");
    previous = std::set<Edge>(open.begin(), open.end());
    state.rounds.push_back(std::move(log));
  }
  return state;
}

std::string round_log_csv(const ExplorationState& state) {
  std::vector<Edge> columns;
  for (const auto& r : state.rounds)
    for (const auto& e : r.entries)
      if (std::find(columns.begin(), columns.end(), e.edge) == columns.end()) columns.push_back(e.edge);
  std::string out = "round,selected";
  for (const auto& c : columns) out += "," + c.label();
  out += "\n";
  for (const auto& r : state.rounds) {
    out += std::to_string(r.round) + "," + r.selected.label();
    for (const auto& c : columns) {
      out += ",";
      const auto it = std::find_if(r.entries.begin(), r.entries.end(), [&](const RoundEntry& e) { return e.edge == c; });
      if (it == r.entries.end()) continue;
      out += data::format_double(it->delta);
      std::string marks;
      if (it->selected) marks += "S";
      if (it->trimmed) marks += "T";
      if (it->newly) marks += "N";
      if (!marks.empty()) out += ";" + marks;
    }
    out += "\n";
  }
  return out;
}

std::string round_log_text(const ExplorationState& state) {
  std::string out;
  for (const auto& r : state.rounds) {
    out += "#" + std::to_string(r.round) + "  selected " + r.selected.label() + "\n";
    for (const auto& e : r.entries) {
      char line[160];
      std::snprintf(line, sizeof line, "  %-12s %12s  %s%s%s\n", e.edge.label().c_str(), fixed4(e.delta).c_str(),
                    e.selected ? "[selected]" : "", e.trimmed ? "[trimmed]" : "", e.newly ? "[new]" : "");
      out += line;
    }
  }
  return out;
}

}  // namespace rirl::explore
