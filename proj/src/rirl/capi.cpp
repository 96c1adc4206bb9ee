#include "rirl/rirl.h"

#include <cstdlib>
#include <cstring>
#include <sstream>
#include <string>

#include "rirl/error.hpp"
#include "rirl/metrics.hpp"
#include "rirl/persistence.hpp"
#include "rirl/pipeline.hpp"

struct rirl_config {
  rirl::pipeline::RunConfig value;
  rirl_log_fn log = nullptr;
  void* log_user = nullptr;
};

struct rirl_node_model {
  rirl::node::NodeAutoencoder value;
};

namespace {

thread_local std::string last_error;

rirl_status fail(rirl_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename Fn>
rirl_status guard(Fn fn) {
  try {
    fn();
    last_error.clear();
    return RIRL_OK;
  } catch (const rirl::Error& e) {
    return fail(static_cast<rirl_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(RIRL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RIRL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(RIRL_ERR_INTERNAL, "unknown failure");
  }
}

char* copy_out(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

void put(char** out, const std::string& text) {
  if (out) *out = copy_out(text);
}

// Forwards whole lines to the configured callback.
class LogBuffer : public std::stringbuf {
 public:
  LogBuffer(rirl_log_fn fn, void* user) : fn_(fn), user_(user) {}

 protected:
  int sync() override {
    std::string text = str();
    std::size_t start = 0;
    for (std::size_t nl; (nl = text.find('\n', start)) != std::string::npos; start = nl + 1)
      fn_(text.substr(start, nl - start).c_str(), user_);
    str(text.substr(start));
    return 0;
  }

 private:
  rirl_log_fn fn_;
  void* user_;
};

struct LogStream {
  explicit LogStream(const rirl_config* config)
      : buffer(config->log, config->log_user), stream(&buffer), active(config->log != nullptr) {}
  ~LogStream() { stream.flush(); }
  std::ostream* get() { return active ? &stream : nullptr; }

  LogBuffer buffer;
  std::ostream stream;
  bool active;
};

#define RIRL_REQUIRE(cond, what) \
  if (!(cond)) return fail(RIRL_ERR_ARGUMENT, what)

}  // namespace

extern "C" {

const char* rirl_version(void) { return "1.0.0"; }

const char* rirl_status_name(rirl_status status) {
  if (status == RIRL_ERR_ARGUMENT) return "argument";
  return rirl::error_code_name(static_cast<rirl::ErrorCode>(status));
}

const char* rirl_last_error(void) { return last_error.c_str(); }

void rirl_string_free(char* text) { std::free(text); }

rirl_status rirl_config_new(rirl_config** out) {
  RIRL_REQUIRE(out, "rirl_config_new: null output");
  return guard([&] { *out = new rirl_config(); });
}

void rirl_config_free(rirl_config* config) { delete config; }

rirl_status rirl_config_load(rirl_config* config, const char* path) {
  RIRL_REQUIRE(config && path, "rirl_config_load: null argument");
  return guard([&] { rirl::pipeline::apply_run_config_file(config->value, path); });
}

rirl_status rirl_config_set(rirl_config* config, const char* key, const char* value) {
  RIRL_REQUIRE(config && key && value, "rirl_config_set: null argument");
  return guard([&] { config->value.set(key, value); });
}

rirl_status rirl_config_get(const rirl_config* config, const char* key, char** value) {
  RIRL_REQUIRE(config && key && value, "rirl_config_get: null argument");
  return guard([&] { put(value, config->value.get(key)); });
}

rirl_status rirl_config_text(const rirl_config* config, char** text) {
  RIRL_REQUIRE(config && text, "rirl_config_text: null argument");
  return guard([&] { put(text, config->value.to_text()); });
}

rirl_status rirl_config_set_log(rirl_config* config, rirl_log_fn fn, void* user) {
  RIRL_REQUIRE(config, "rirl_config_set_log: null config");
  config->log = fn;
  config->log_user = user;
  return RIRL_OK;
}

rirl_status rirl_synth(const char* spec_path, int days, uint64_t seed, const char* out_csv, char** summary) {
  RIRL_REQUIRE(spec_path && out_csv, "rirl_synth: null argument");
  return guard([&] {
    const auto rows = rirl::pipeline::cmd_synth(spec_path, days, seed, out_csv);
    put(summary, rirl::metrics::node_table_csv(rows));
  });
}

rirl_status rirl_init(const rirl_config* config, char** table) {
  RIRL_REQUIRE(config, "rirl_init: null config");
  return guard([&] {
    LogStream log(config);
    const auto rows = rirl::pipeline::cmd_init(config->value, log.get());
    put(table, rirl::metrics::node_table_csv(rows));
  });
}

rirl_status rirl_edge(const rirl_config* config, const char* causes, const char* effect, char** row) {
  RIRL_REQUIRE(config && causes && effect, "rirl_edge: null argument");
  return guard([&] {
    std::vector<std::string> list;
    std::stringstream in(causes);
    for (std::string name; std::getline(in, name, ',');)
      if (!name.empty()) list.push_back(name);
    if (list.empty()) throw rirl::ConfigError("no cause nodes given");
    LogStream log(config);
    const auto r = rirl::pipeline::cmd_edge(config->value, list, effect, log.get());
    put(row, rirl::metrics::metric_table_csv({r}));
  });
}

rirl_status rirl_explore(const rirl_config* config, const char* candidates_path, const char* run_dir, char** edges) {
  RIRL_REQUIRE(config && run_dir, "rirl_explore: null argument");
  return guard([&] {
    LogStream log(config);
    const auto outcome =
        rirl::pipeline::cmd_explore(config->value, candidates_path ? candidates_path : "", run_dir, log.get());
    std::string text;
    for (const auto& e : outcome.edges) text += e.label() + "\n";
    put(edges, text);
  });
}

rirl_status rirl_report(const char* run_dir, const char* format, const char* out_dir, char** files) {
  RIRL_REQUIRE(run_dir && format, "rirl_report: null argument");
  return guard([&] {
    const auto written = rirl::pipeline::cmd_report(run_dir, format, out_dir ? out_dir : "");
    std::string text;
    for (const auto& f : written) text += f + "\n";
    put(files, text);
  });
}

rirl_status rirl_node_model_load(const char* path, rirl_node_model** out) {
  RIRL_REQUIRE(path && out, "rirl_node_model_load: null argument");
  *out = nullptr;
  return guard([&] { *out = new rirl_node_model{rirl::io::load_model(path)}; });
}

void rirl_node_model_free(rirl_node_model* model) { delete model; }

size_t rirl_node_model_dim(const rirl_node_model* model) { return model ? static_cast<size_t>(model->value.dim) : 0; }

size_t rirl_node_model_latent_dim(const rirl_node_model* model) {
  return model ? static_cast<size_t>(model->value.latent_dim) : 0;
}

rirl_status rirl_node_model_encode(const rirl_node_model* model, const double* values, size_t dim, int month,
                                   double* latent, size_t latent_dim) {
  RIRL_REQUIRE(model && values && latent, "rirl_node_model_encode: null argument");
  return guard([&] {
    const auto& m = model->value;
    if (dim != static_cast<size_t>(m.dim) || latent_dim != static_cast<size_t>(m.latent_dim))
      throw rirl::ShapeError("encode: buffer sizes do not match the model");
    const rirl::nn::Vector raw = Eigen::Map<const rirl::nn::Vector>(values, static_cast<Eigen::Index>(dim));
    const rirl::nn::Vector z = m.encode(rirl::node::featurize(raw, month, m.scaler));
    std::memcpy(latent, z.data(), latent_dim * sizeof(double));
  });
}

rirl_status rirl_node_model_decode(const rirl_node_model* model, const double* latent, size_t latent_dim,
                                   double* values, double* mask_prob, size_t dim) {
  RIRL_REQUIRE(model && latent && values, "rirl_node_model_decode: null argument");
  return guard([&] {
    const auto& m = model->value;
    if (dim != static_cast<size_t>(m.dim) || latent_dim != static_cast<size_t>(m.latent_dim))
      throw rirl::ShapeError("decode: buffer sizes do not match the model");
    const auto out =
        m.decode_node(Eigen::Map<const rirl::nn::Vector>(latent, static_cast<Eigen::Index>(latent_dim)));
    std::memcpy(values, out.values.data(), dim * sizeof(double));
    if (mask_prob) std::memcpy(mask_prob, out.mask_prob.data(), dim * sizeof(double));
  });
}

}  // extern "C"
