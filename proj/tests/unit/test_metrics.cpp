#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <regex>

#include "rirl/error.hpp"
#include "rirl/metrics.hpp"
#include "unit/support.hpp"

using namespace rirl;
using namespace rirl::metrics;

namespace {

Vector vec(std::initializer_list<double> v) {
  return Eigen::Map<const Vector>(v.begin(), static_cast<Eigen::Index>(v.size()));
}

// Tag balance check: every element opened is closed in order, self-closing tags pass.
bool well_formed(const std::string& xml) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = xml.find('<', pos)) != std::string::npos) {
    const std::size_t end = xml.find('>', pos);
    if (end == std::string::npos) return false;
    const std::string tag = xml.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag.back() == '/') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    stack.push_back(tag.substr(0, tag.find(' ')));
  }
  return stack.empty();
}

}  // namespace

TEST_CASE("rmse by hand") {
  Matrix p(2, 2), o(2, 2);
  p << 1, 2, 3, 4;
  o << 1, 0, 3, 8;
  CHECK(rmse(p, o) == doctest::Approx(std::sqrt(20.0 / 4.0)));
  CHECK_THROWS_AS(rmse(p, Matrix::Zero(3, 2)), ShapeError);
  CHECK_THROWS_AS(rmse(Matrix(0, 0), Matrix(0, 0)), MetricError);
}

TEST_CASE("nse of a perfect prediction is one and of the mean is zero") {
  const Vector obs = vec({1.0, 3.0, 2.0, 6.0});
  CHECK(nse(obs, obs) == 1.0);
  CHECK(nse(Vector::Constant(4, obs.mean()), obs) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("nse by hand") {
  // ss about mean 3: 4 + 0 + 1 + 9 = 14; sse: 0.25 + 1 + 0 + 4 = 5.25
  const Vector obs = vec({1.0, 3.0, 2.0, 6.0});
  const Vector pred = vec({1.5, 2.0, 2.0, 4.0});
  CHECK(nse(pred, obs) == doctest::Approx(1.0 - 5.25 / 14.0).epsilon(1e-15));
  CHECK(nse(-obs, obs) < 0.0);
}

TEST_CASE("nse errors") {
  CHECK_THROWS_AS(nse(vec({1.0}), vec({1.0})), MetricError);
  CHECK_THROWS_AS(nse(vec({1.0, 2.0}), vec({5.0, 5.0})), MetricError);
  CHECK_THROWS_AS(nse(vec({1.0, 2.0}), vec({1.0, 2.0, 3.0})), ShapeError);
}

TEST_CASE("metric table round trips exactly") {
  std::vector<MetricRow> rows = {{"D", "B", 0.1, 2.5, 0.3, 8.5147}, {"D", "B+C", 1.0 / 3.0, 1e-9, 0.0, -5.9191}};
  const auto back = parse_metric_table_csv(metric_table_csv(rows));
  REQUIRE(back.size() == 2);
  CHECK(back[1].causes == "B+C");
  CHECK(back[1].rmse_scaled == 1.0 / 3.0);
  CHECK(back[1].kld == -5.9191);
  CHECK(back[0].rmse_unscaled == 2.5);
}

TEST_CASE("metric table rejects empty, non-finite and malformed input") {
  CHECK_THROWS_AS(metric_table_csv({}), MetricError);
  CHECK_THROWS_AS(metric_table_csv({{"D", "B", NAN, 0, 0, 0}}), MetricError);
  CHECK_THROWS_AS(parse_metric_table_csv("nope\n"), MetricError);
  CHECK_THROWS_AS(parse_metric_table_csv("effect,causes,rmse_scaled,rmse_unscaled,mask_bce,kld\nD,B,1,2\n"), MetricError);
  CHECK_THROWS_AS(parse_metric_table_csv("effect,causes,rmse_scaled,rmse_unscaled,mask_bce,kld\nD,B,1,2,x,3\n"),
                  MetricError);
}

TEST_CASE("node table leaves metric cells blank when absent") {
  NodeSummaryRow a{"A", 2, 1.0, 0.5, 0.0, 3.0, 11.4, 0.05, 0.1, 0.2, true};
  NodeSummaryRow b{"B", 1, 0.0, 1.0, -1.0, 1.0, 100.0};
  const std::string csv = node_table_csv({a, b});
  CHECK(csv.rfind("node,dim,mean,std,min,max,nonzero_rate_pct,rmse_scaled,rmse_unscaled,mask_bce\n", 0) == 0);
  CHECK(csv.find("A,2,1,0.5,0,3,11.4,0.050000000000000003,0.10000000000000001,0.20000000000000001\n") !=
        std::string::npos);
  CHECK(csv.find("B,1,0,1,-1,1,100,,,\n") != std::string::npos);
}

TEST_CASE("discovery table has header, KLD and gain rows") {
  const std::string csv = discovery_table_csv({{"A->C", 7.6354, 7.6354}, {"C->D", 9.6502, 1.1355}});
  CHECK(csv == "row,A->C,C->D\nKLD,7.6353999999999997,9.6501999999999999\nGain,7.6353999999999997,1.1355\n");
  CHECK_THROWS_AS(discovery_table_csv({}), MetricError);
}

TEST_CASE("table emitters match the golden files") {
  CHECK(metric_table_csv({{"C", "A", 0.1747, 1.25, 0.03125, 7.6353}, {"D", "B+C", 0.5, 2.0, 0.0, 9.6502}}) ==
        read_text(test_support::golden("metric_table.csv")));
  CHECK(node_table_csv({{"A", 2, 1.5, 0.25, -3.3557, 4.0, 100.0, 0.125, 0.5, 0.0625, true},
                        {"B", 1, 0.0, 1.0, 0.0, 2.0, 50.0}}) == read_text(test_support::golden("node_table.csv")));
  CHECK(discovery_table_csv({{"A->C", 7.6354, 7.6354}, {"C->D", 9.6502, 1.1355}}) ==
        read_text(test_support::golden("discovery_table.csv")));
}

TEST_CASE("re-emitting the same rows is byte-identical") {
  const std::vector<MetricRow> rows = {{"E", "D", 0.3, 0.7, 0.01, 2.5}};
  CHECK(metric_table_csv(rows) == metric_table_csv(parse_metric_table_csv(metric_table_csv(rows))));
}

TEST_CASE("plot output matches the golden files") {
  test_support::TempDir dir("metrics");
  const std::string stem = dir.file("plot");
  emit_plot("D reconstruction", {1.0, 2.0, 1.5, 0.5},
            {{"own", {1.1, 1.9, 1.4, 0.6}}, {"B,C->D", {0.9, 2.2, 1.5, 0.25}}}, stem);
  CHECK(read_text(stem + ".svg") == read_text(test_support::golden("plot.svg")));
  CHECK(read_text(stem + ".csv") == read_text(test_support::golden("plot.csv")));
}

TEST_CASE("nse agrees with one minus mse over the population variance") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vector obs(50), pred(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
      obs(i) = normal(rng);
      pred(i) = obs(i) + 0.5 * normal(rng);
    }
    const double mse = rmse(pred, obs) * rmse(pred, obs);
    const double var = (obs.array() - obs.mean()).square().mean();
    CHECK(nse(pred, obs) == doctest::Approx(1.0 - mse / var).epsilon(1e-12));
  }
}

TEST_CASE("identical series overlap and still parse") {
  const std::vector<double> s = {1.0, 3.0, 2.0};
  const std::string svg = render_svg("same", s, {{"a", s}, {"b", s}});
  CHECK(well_formed(svg));
  const auto first = svg.find("points=\"");
  const auto second = svg.find("points=\"", first + 1);
  REQUIRE(second != std::string::npos);
  CHECK(svg.substr(first, svg.find('"', first + 8) - first) == svg.substr(second, svg.find('"', second + 8) - second));
}

TEST_CASE("svg is well formed and carries the legend") {
  const std::vector<double> truth = {1.0, 2.0, 1.5};
  const std::string svg = render_svg("A & <B>", truth, {{"A->B", {1.1, 1.9, 1.4}}, {"own", {1.0, 2.0, 1.5}}});
  CHECK(well_formed(svg));
  CHECK(svg.find("A &amp; &lt;B&gt;") != std::string::npos);
  CHECK(svg.find("A-&gt;B") != std::string::npos);
  const std::regex poly("<polyline");
  CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), poly), std::sregex_iterator()) == 2);
  const std::regex circle("<circle");
  CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), circle), std::sregex_iterator()) == 4);
}

TEST_CASE("a year of points stays under 200 KB") {
  std::vector<double> truth(365);
  std::vector<double> a(365), b(365);
  for (int i = 0; i < 365; ++i) {
    truth[static_cast<std::size_t>(i)] = std::sin(i / 20.0);
    a[static_cast<std::size_t>(i)] = std::sin(i / 20.0) + 0.1;
    b[static_cast<std::size_t>(i)] = std::cos(i / 20.0);
  }
  const std::string svg = render_svg("year", truth, {{"a", a}, {"b", b}});
  CHECK(svg.size() <= 200 * 1024);
  CHECK(well_formed(svg));
}

TEST_CASE("flat series still render") {
  CHECK(well_formed(render_svg("flat", {2.0, 2.0}, {})));
  CHECK(well_formed(render_svg("one", {2.0}, {{"x", {3.0}}})));
}

TEST_CASE("plot sidecar csv holds the plotted values") {
  const std::string csv = plot_csv({1.0, 2.5}, {{"p", {0.5, 3.0}}});
  CHECK(csv == "step,truth,p\n0,1,0.5\n1,2.5,3\n");
}

TEST_CASE("plot errors") {
  CHECK_THROWS_AS(render_svg("t", {}, {}), PlotError);
  CHECK_THROWS_AS(render_svg("t", {1.0, 2.0}, {{"x", {1.0}}}), PlotError);
  CHECK_THROWS_AS(render_svg("t", {1.0, 2.0}, {{"x", {}}}), PlotError);
  CHECK_THROWS_AS(render_svg("t", {1.0, NAN}, {}), PlotError);
  CHECK_THROWS_AS(plot_csv({1.0}, {{"x", {1.0, 2.0}}}), PlotError);
}

TEST_CASE("emit_plot writes both files") {
  test_support::TempDir dir("metrics");
  const std::string stem = dir.file("fig");
  emit_plot("t", {1.0, 2.0}, {{"x", {1.5, 2.5}}}, stem);
  CHECK(std::filesystem::exists(stem + ".svg"));
  CHECK(read_text(stem + ".csv") == "step,truth,x\n0,1,1.5\n1,2,2.5\n");
  CHECK_THROWS_AS(write_text(dir.file("missing/dir/x.txt"), "x"), PersistenceError);
  CHECK_THROWS_AS(read_text(dir.file("absent.txt")), PersistenceError);
}
