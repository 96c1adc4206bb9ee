#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "rirl/rirl.h"

namespace fs = std::filesystem;

namespace {

struct Text {
  char* ptr = nullptr;
  ~Text() { rirl_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

struct Config {
  rirl_config* ptr = nullptr;
  Config() { REQUIRE(rirl_config_new(&ptr) == RIRL_OK); }
  ~Config() { rirl_config_free(ptr); }
  void set(const char* k, const std::string& v) { REQUIRE(rirl_config_set(ptr, k, v.c_str()) == RIRL_OK); }
};

struct Scratch {
  fs::path path;
  Scratch() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("rirl_capi_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

const char* kSpec = R"({
  "nodes": [
    {"name": "A", "dim": 1, "nonzero_rate": 1.0, "seasonal_amplitude": 1.0},
    {"name": "B", "dim": 1, "nonzero_rate": 1.0, "seasonal_amplitude": 1.0}
  ],
  "edges": [{"cause": "A", "effect": "B", "lag": 1, "tier": 1, "gain": 3.0}]
})";

void log_sink(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); }

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(rirl_version()).size() > 0);
  CHECK(std::string(rirl_status_name(RIRL_OK)) == "ok");
  CHECK(std::string(rirl_status_name(RIRL_ERR_CONFIG)) == "config");
  CHECK(std::string(rirl_status_name(RIRL_ERR_ARGUMENT)) == "argument");
}

TEST_CASE("config set, get and text") {
  Config c;
  c.set("epochs", "7");
  Text v;
  REQUIRE(rirl_config_get(c.ptr, "epochs", &v.ptr) == RIRL_OK);
  CHECK(v.str() == "7");
  Text all;
  REQUIRE(rirl_config_text(c.ptr, &all.ptr) == RIRL_OK);
  CHECK(all.str().find("epochs = 7\n") != std::string::npos);
  CHECK(std::string(rirl_last_error()).empty());
}

TEST_CASE("errors map to status codes and leave a message") {
  Config c;
  CHECK(rirl_config_set(c.ptr, "bogus", "1") == RIRL_ERR_CONFIG);
  CHECK(std::string(rirl_last_error()).find("bogus") != std::string::npos);
  CHECK(rirl_config_set(c.ptr, nullptr, "1") == RIRL_ERR_ARGUMENT);
  CHECK(rirl_config_new(nullptr) == RIRL_ERR_ARGUMENT);
  CHECK(rirl_config_load(c.ptr, "/nonexistent/rirl.cfg") == RIRL_ERR_CONFIG);
  Text files;
  CHECK(rirl_report("/nonexistent/run", "csv", nullptr, &files.ptr) == RIRL_ERR_PERSISTENCE);
  rirl_node_model* m = nullptr;
  CHECK(rirl_node_model_load("/nonexistent/model.json", &m) == RIRL_ERR_PERSISTENCE);
  CHECK(m == nullptr);
  CHECK(rirl_node_model_dim(nullptr) == 0);
  CHECK(rirl_init(c.ptr, nullptr) == RIRL_ERR_CONFIG);  // no data path
}

TEST_CASE("end to end through the C interface") {
  Scratch dir;
  std::ofstream(dir.file("spec.json")) << kSpec;
  Text summary;
  REQUIRE(rirl_synth(dir.file("spec.json").c_str(), 300, 3, dir.file("d.csv").c_str(), &summary.ptr) == RIRL_OK);
  CHECK(summary.str().rfind("node,dim", 0) == 0);

  Config c;
  c.set("data", dir.file("d.csv"));
  c.set("models", dir.file("models"));
  c.set("reports", dir.file("reports"));
  c.set("latent_dim", "3");
  c.set("num_keys", "1");
  c.set("hidden", "6");
  c.set("epochs", "2");
  c.set("edge_epochs", "2");
  c.set("window_n", "2");
  std::vector<std::string> lines;
  REQUIRE(rirl_config_set_log(c.ptr, log_sink, &lines) == RIRL_OK);

  Text table;
  REQUIRE(rirl_init(c.ptr, &table.ptr) == RIRL_OK);
  CHECK(table.str().find("\nA,1,") != std::string::npos);
  CHECK(lines.size() == 2);

  Text row;
  REQUIRE(rirl_edge(c.ptr, "A", "B", &row.ptr) == RIRL_OK);
  CHECK(row.str().find("\nB,A,") != std::string::npos);
  CHECK(rirl_edge(c.ptr, "", "B", nullptr) == RIRL_ERR_CONFIG);

  Text edges;
  REQUIRE(rirl_explore(c.ptr, nullptr, dir.file("run").c_str(), &edges.ptr) == RIRL_OK);
  CHECK(edges.str() == "A->B\n");
  Text files;
  REQUIRE(rirl_report(dir.file("run").c_str(), "svg", nullptr, &files.ptr) == RIRL_OK);
  CHECK(files.str().find("B_recon.svg") != std::string::npos);
  CHECK(rirl_report(dir.file("run").c_str(), "gif", nullptr, nullptr) == RIRL_ERR_CONFIG);

  rirl_node_model* m = nullptr;
  REQUIRE(rirl_node_model_load(dir.file("models/A.json").c_str(), &m) == RIRL_OK);
  CHECK(rirl_node_model_dim(m) == 1);
  CHECK(rirl_node_model_latent_dim(m) == 3);
  const double value = 2.0;
  double z[3];
  REQUIRE(rirl_node_model_encode(m, &value, 1, 5, z, 3) == RIRL_OK);
  double out = 0.0;
  double prob = 0.0;
  REQUIRE(rirl_node_model_decode(m, z, 3, &out, &prob, 1) == RIRL_OK);
  CHECK(std::isfinite(out));
  CHECK(prob >= 0.0);
  CHECK(prob <= 1.0);
  CHECK(rirl_node_model_encode(m, &value, 2, 5, z, 3) == RIRL_ERR_SHAPE);
  CHECK(rirl_node_model_encode(m, &value, 1, 13, z, 3) == RIRL_ERR_CONFIG);
  CHECK(rirl_node_model_decode(m, z, 3, nullptr, nullptr, 1) == RIRL_ERR_ARGUMENT);
  rirl_node_model_free(m);
}
