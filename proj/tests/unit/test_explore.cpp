#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rirl/error.hpp"
#include "rirl/explore.hpp"
#include "rirl/rng.hpp"

using namespace rirl;
using namespace rirl::explore;

namespace {

const std::vector<std::string> kTen = {"A", "B", "C", "D", "E", "F", "G", "H", "I", "J"};

// Single-cause strengths of the first round of the ten-node reference log.
std::map<std::string, double> first_round_table() {
  return {{"A->C", 7.6354},  {"A->D", 19.7407}, {"A->E", 60.1876}, {"A->F", 119.7730},
          {"B->C", 8.4753},  {"B->D", 8.5147},  {"B->E", 65.9335}, {"B->F", 132.7717}};
}

CandidateMap reference_candidates() {
  return {{"A", {}},
          {"B", {}},
          {"C", {"A", "B"}},
          {"D", {"A", "B", "C"}},
          {"E", {"A", "B", "C", "D"}},
          {"F", {"A", "B", "C", "D", "E"}},
          {"G", {"C", "D", "E"}},
          {"H", {"C", "D", "E"}},
          {"I", {"C", "D", "E", "F"}},
          {"J", {"G", "H", "I"}}};
}

// K(S, n) = sum of per-edge weights, so every gain equals its edge weight.
class AdditiveOracle : public StrengthOracle {
 public:
  explicit AdditiveOracle(std::map<Edge, double> w) : w_(std::move(w)) {}
  double strength(const std::vector<std::string>& causes, const std::string& effect) override {
    ++calls;
    double k = 0.0;
    for (const auto& c : causes) k += w_.at(Edge{c, effect});
    return k;
  }
  int calls = 0;

 private:
  std::map<Edge, double> w_;
};

// The sixteen true edges of the ten-node system and the gains they were selected with.
std::map<Edge, double> true_edge_gains() {
  return {{{"A", "C"}, 7.6354},  {{"B", "D"}, 8.5147},  {{"C", "D"}, 1.1355},  {{"C", "G"}, 11.6012},
          {{"D", "G"}, 2.4540},  {{"G", "J"}, 5.2924},  {{"D", "H"}, 25.1988}, {{"H", "J"}, 0.2092},
          {{"C", "E"}, 46.5876}, {{"B", "E"}, -6.8372}, {{"E", "G"}, -5.9191}, {{"E", "H"}, -3.2931},
          {{"E", "F"}, 53.6806}, {{"F", "I"}, 45.6490}, {{"I", "J"}, 0.0284},  {{"D", "I"}, 3.3845}};
}

const RoundEntry& entry(const RoundLog& log, const std::string& cause, const std::string& effect) {
  for (const auto& e : log.entries)
    if (e.edge == Edge{cause, effect}) return e;
  throw std::runtime_error("missing entry " + cause + "->" + effect);
}

}  // namespace

TEST_CASE("gain with an existing parent is the strength difference") {
  TableOracle oracle({{"B->D", 8.5147}, {"B,C->D", 9.6502}});
  CHECK(kld_gain(oracle, {"B"}, "C", "D") == doctest::Approx(1.1355).epsilon(1e-12));
  CHECK(kld_gain(oracle, {}, "B", "D") == 8.5147);
}

TEST_CASE("gain can be negative") {
  TableOracle oracle({{"C,D->G", 14.0552}, {"C,D,E->G", 8.1361}});
  CHECK(kld_gain(oracle, {"C", "D"}, "E", "G") == doctest::Approx(-5.9191).epsilon(1e-12));
}

TEST_CASE("missing table entries are exploration errors") {
  TableOracle oracle({});
  CHECK_THROWS_AS(kld_gain(oracle, {}, "A", "B"), ExplorationError);
}

TEST_CASE("first round of the reference log selects A->C and trims B->C") {
  TableOracle oracle(first_round_table());
  const auto state = explore::explore(kTen, reference_candidates(), oracle, {.max_rounds = 1});
  REQUIRE(state.rounds.size() == 1);
  const auto& log = state.rounds[0];
  CHECK(log.selected == Edge{"A", "C"});
  CHECK(log.entries.size() == 8);
  CHECK(entry(log, "A", "C").selected);
  CHECK(entry(log, "A", "C").delta == 7.6354);
  CHECK(entry(log, "B", "C").trimmed);
  CHECK(entry(log, "B", "C").delta == 8.4753);
  for (const auto& e : log.entries) {
    CHECK(e.newly);
    if (e.edge.effect != "C") CHECK_FALSE(e.trimmed);
  }
}

TEST_CASE("second and third rounds follow the reference log") {
  auto table = first_round_table();
  table.insert({{"C->D", 10.1490},
                {"C->E", 46.5876},
                {"C->F", 111.2978},
                {"C->G", 11.6012},
                {"C->H", 39.2361},
                {"C->I", 95.1564},
                {"A,B->D", 18.2504},
                {"B,C->D", 9.6502},
                {"A,B->C", 20.0},
                {"D->E", 63.7348},
                {"D->F", 123.3203},
                {"D->G", 27.8798},
                {"D->H", 25.1988},
                {"D->I", 75.5775}});
  TableOracle oracle(table);
  const auto state = explore::explore(kTen, reference_candidates(), oracle, {.max_rounds = 3});
  REQUIRE(state.rounds.size() == 3);
  CHECK(state.rounds[1].selected == Edge{"B", "D"});
  CHECK(entry(state.rounds[1], "A", "D").trimmed);
  CHECK(entry(state.rounds[1], "C", "D").trimmed);
  CHECK(entry(state.rounds[1], "C", "G").newly);
  CHECK_FALSE(entry(state.rounds[1], "A", "E").newly);
  const auto& third = state.rounds[2];
  CHECK(third.selected == Edge{"C", "D"});
  CHECK(entry(third, "C", "D").delta == doctest::Approx(1.1355).epsilon(1e-12));
  CHECK(entry(third, "A", "D").delta == doctest::Approx(9.7357).epsilon(1e-12));
  CHECK(entry(third, "A", "D").trimmed);
  CHECK(entry(third, "D", "H").delta == 25.1988);
  CHECK(entry(third, "D", "H").newly);
}

TEST_CASE("true-edge candidate map yields all sixteen edges in sixteen rounds") {
  const auto gains = true_edge_gains();
  std::vector<Edge> truth;
  for (const auto& [e, g] : gains) truth.push_back(e);
  AdditiveOracle oracle(gains);
  const auto state = explore::explore(kTen, candidate_map_from_edges(truth), oracle);
  CHECK(state.rounds.size() == 16);
  REQUIRE(state.edges.size() == 16);
  auto chosen = state.edges;
  std::sort(chosen.begin(), chosen.end());
  CHECK(chosen == truth);
  CHECK(is_acyclic(kTen, state.edges));
  CHECK(state.stale_reuse == 0);
  for (const auto& r : state.rounds) CHECK(entry(r, r.selected.cause, r.selected.effect).delta == doctest::Approx(gains.at(r.selected)).epsilon(1e-12));
  CHECK(state.edges.front() == Edge{"B", "E"});  // the only negative gain leaving a source
}

TEST_CASE("the only candidate of a two-node system is selected") {
  TableOracle oracle({{"X->Y", 42.0}});
  const auto state = explore::explore({"X", "Y"}, {{"Y", {"X"}}}, oracle);
  REQUIRE(state.edges.size() == 1);
  CHECK(state.edges[0] == Edge{"X", "Y"});
  CHECK(state.rounds.size() == 1);
}

TEST_CASE("first pick is the exhaustive single-cause argmin") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-5.0, 20.0);
    std::map<std::string, double> table;
    const std::vector<std::string> nodes = {"A", "B", "C", "D", "E"};
    const auto cand = forward_candidate_map(nodes);
    double best = std::numeric_limits<double>::infinity();
    std::string best_id;
    for (const auto& [n, ps] : cand)
      for (const auto& p : ps) {
        const double k = u(rng);
        table[p + "->" + n] = k;
        if (p == "A" && k < best) {
          best = k;
          best_id = p + "->" + n;
        }
      }
    TableOracle oracle(table);
    const auto state = explore::explore(nodes, cand, oracle, {.max_rounds = 1});
    CHECK(state.rounds[0].selected.label() == best_id);
  }
}

TEST_CASE("ties resolve to the lexicographically first edge") {
  TableOracle oracle({{"A->B", 1.0}, {"A->C", 1.0}, {"A,B->C", 9.0}, {"B->C", 3.0}});
  const auto state = explore::explore({"A", "B", "C"}, forward_candidate_map({"A", "B", "C"}), oracle, {.max_rounds = 1});
  CHECK(state.rounds[0].selected == Edge{"A", "B"});
}

TEST_CASE("stale evaluations are recomputed, never reused") {
  const std::vector<std::string> nodes = {"A", "B", "C", "D"};
  std::map<Edge, double> w;
  Rng rng(3);
  std::uniform_real_distribution<double> u(-2.0, 10.0);
  for (const auto& [n, ps] : forward_candidate_map(nodes))
    for (const auto& p : ps) w[{p, n}] = u(rng);
  AdditiveOracle oracle(w);
  const auto state = explore::explore(nodes, forward_candidate_map(nodes), oracle);
  CHECK(state.stale_reuse == 0);
  CHECK(state.edges.size() == 6);
  CHECK(is_acyclic(nodes, state.edges));
  for (const auto& r : state.rounds)
    for (const auto& e : r.entries) CHECK(e.delta == doctest::Approx(w.at(e.edge)).epsilon(1e-12));
  CHECK(state.evaluated + state.reused > state.evaluated);
}

TEST_CASE("selected edges never close a cycle") {
  const std::vector<std::string> nodes = {"A", "B", "C"};
  CandidateMap cand = {{"A", {}}, {"B", {"A", "C"}}, {"C", {"B"}}};
  AdditiveOracle oracle({{{"A", "B"}, 1.0}, {{"C", "B"}, -10.0}, {{"B", "C"}, 1.0}});
  const auto state = explore::explore(nodes, cand, oracle);
  CHECK(is_acyclic(nodes, state.edges));
  for (const auto& e : state.edges) CHECK_FALSE(e == Edge{"C", "B"});
}

TEST_CASE("acyclicity check") {
  CHECK(is_acyclic({"A", "B", "C"}, {{"A", "B"}, {"B", "C"}, {"A", "C"}}));
  CHECK_FALSE(is_acyclic({"A", "B", "C"}, {{"A", "B"}, {"B", "C"}, {"C", "A"}}));
}

TEST_CASE("gain threshold stops once every node is reachable") {
  AdditiveOracle oracle({{{"A", "B"}, 1.0}, {{"A", "C"}, 2.0}, {{"B", "C"}, 5.0}});
  const auto state = explore::explore({"A", "B", "C"}, forward_candidate_map({"A", "B", "C"}), oracle, {.gain_threshold = 3.0});
  CHECK(state.edges.size() == 2);
}

TEST_CASE("exploration errors") {
  TableOracle oracle({});
  CHECK_THROWS_AS(explore::explore({"A", "B"}, {{"A", {"B"}}, {"B", {"A"}}}, oracle), ExplorationError);
  CHECK_THROWS_AS(explore::explore({"A", "B"}, {{"A", {}}, {"B", {}}}, oracle), ExplorationError);
  CHECK_THROWS_AS(explore::explore({"A", "B"}, {{"B", {"Q"}}}, oracle), ConfigError);
  CHECK_THROWS_AS(explore::explore({"A", "A"}, {}, oracle), ConfigError);
  CHECK_THROWS_AS(explore::explore({"A", "B"}, {{"B", {"A"}}}, oracle, {.max_rounds = 0}), ConfigError);
  CHECK_THROWS_AS(explore::explore({"A", "B"}, {{"B", {"A"}}}, oracle), ExplorationError);
}

TEST_CASE("round log csv marks selection, trimming and new edges") {
  TableOracle oracle({{"A->B", 1.0}, {"A->C", 2.5}, {"A,B->C", 3.0}, {"B->C", 7.0}});
  const auto state = explore::explore({"A", "B", "C"}, forward_candidate_map({"A", "B", "C"}), oracle);
  const std::string csv = round_log_csv(state);
  std::istringstream in(csv);
  std::string header, r1, r2, r3;
  std::getline(in, header);
  std::getline(in, r1);
  std::getline(in, r2);
  std::getline(in, r3);
  CHECK(header == "round,selected,A->B,A->C,B->C");
  CHECK(r1 == "1,A->B,1;SN,2.5;N,");
  CHECK(r2 == "2,A->C,,2.5;S,7;TN");
  // B->C rescored against parent A: 3 - 2.5
  CHECK(r3 == "3,B->C,,,0.5;S");
  CHECK(state.reused == 1);
  const std::string text = round_log_text(state);
  CHECK(text.find("#1  selected A->B") != std::string::npos);
  CHECK(text.find("0.5000") != std::string::npos);
}

TEST_CASE("round log csv is identical across runs") {
  const auto gains = true_edge_gains();
  std::vector<Edge> truth;
  for (const auto& [e, g] : gains) truth.push_back(e);
  AdditiveOracle a(gains), b(gains);
  CHECK(round_log_csv(explore::explore(kTen, candidate_map_from_edges(truth), a)) ==
        round_log_csv(explore::explore(kTen, candidate_map_from_edges(truth), b)));
}

TEST_CASE("candidate map json round trip and errors") {
  const auto map = reference_candidates();
  CHECK(parse_candidate_map(candidate_map_to_json(map)) == map);
  CHECK_THROWS_AS(parse_candidate_map(nlohmann::json::array()), ConfigError);
  CHECK_THROWS_AS(parse_candidate_map(nlohmann::json{{"A", "B"}}), ConfigError);
  CHECK_THROWS_AS(parse_candidate_map(nlohmann::json{{"A", {"A"}}}), ConfigError);
  CHECK_THROWS_AS(parse_candidate_map(nlohmann::json{{"A", {1}}}), ConfigError);
  CHECK_THROWS_AS(candidate_map_from_edges({{"A", "A"}}), ConfigError);
  const auto fwd = forward_candidate_map({"X", "Y", "Z"});
  CHECK(fwd.at("X").empty());
  CHECK(fwd.at("Z") == std::set<std::string>{"X", "Y"});
}
