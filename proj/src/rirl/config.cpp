#include "rirl/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "rirl/dataset.hpp"
#include "rirl/error.hpp"
#include "rirl/metrics.hpp"

namespace rirl::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "+inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || std::isnan(out))
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  return out;
}

std::string real_text(double v) { return std::isinf(v) ? (v > 0 ? "inf" : "-inf") : data::format_double(v); }

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "latent_dim", "num_keys",   "window_n",       "window_m",   "lr",     "epochs",  "edge_epochs",
      "hidden",     "batch_size", "lambda_kld",     "lambda_mask", "folds", "eval_folds", "gain_threshold",
      "max_rounds", "seed",       "workers",        "data",       "models", "reports"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "latent_dim") latent_dim = parse_int(key, v);
  else if (key == "num_keys") num_keys = parse_int(key, v);
  else if (key == "window_n") window_n = parse_int(key, v);
  else if (key == "window_m") window_m = parse_int(key, v);
  else if (key == "lr") lr = parse_real(key, v);
  else if (key == "epochs") epochs = parse_int(key, v);
  else if (key == "edge_epochs") edge_epochs = parse_int(key, v);
  else if (key == "hidden") hidden = parse_int(key, v);
  else if (key == "batch_size") batch_size = parse_int(key, v);
  else if (key == "lambda_kld") lambda_kld = parse_real(key, v);
  else if (key == "lambda_mask") lambda_mask = parse_real(key, v);
  else if (key == "folds") folds = parse_int(key, v);
  else if (key == "eval_folds") eval_folds = parse_int(key, v);
  else if (key == "gain_threshold") gain_threshold = parse_real(key, v);
  else if (key == "max_rounds") max_rounds = parse_int(key, v);
  else if (key == "seed") seed = parse_u64(key, v);
  else if (key == "workers") workers = parse_int(key, v);
  else if (key == "data") data = v;
  else if (key == "models") models = v;
  else if (key == "reports") reports = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  if (key == "latent_dim") return std::to_string(latent_dim);
  if (key == "num_keys") return std::to_string(num_keys);
  if (key == "window_n") return std::to_string(window_n);
  if (key == "window_m") return std::to_string(window_m);
  if (key == "lr") return real_text(lr);
  if (key == "epochs") return std::to_string(epochs);
  if (key == "edge_epochs") return std::to_string(edge_epochs);
  if (key == "hidden") return std::to_string(hidden);
  if (key == "batch_size") return std::to_string(batch_size);
  if (key == "lambda_kld") return real_text(lambda_kld);
  if (key == "lambda_mask") return real_text(lambda_mask);
  if (key == "folds") return std::to_string(folds);
  if (key == "eval_folds") return std::to_string(eval_folds);
  if (key == "gain_threshold") return real_text(gain_threshold);
  if (key == "max_rounds") return std::to_string(max_rounds);
  if (key == "seed") return std::to_string(seed);
  if (key == "workers") return std::to_string(workers);
  if (key == "data") return data;
  if (key == "models") return models;
  if (key == "reports") return reports;
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(v > 0)) throw ConfigError(std::string("config key '") + name + "' must be positive");
  };
  positive("latent_dim", latent_dim);
  positive("num_keys", num_keys);
  positive("window_n", window_n);
  positive("lr", lr);
  positive("epochs", epochs);
  positive("edge_epochs", edge_epochs);
  positive("hidden", hidden);
  positive("batch_size", batch_size);
  for (auto [name, v] : {std::pair{"lambda_kld", lambda_kld}, std::pair{"lambda_mask", lambda_mask}})
    if (!(v >= 0.0) || std::isinf(v)) throw ConfigError(std::string("config key '") + name + "' must be finite and non-negative");
  positive("max_rounds", max_rounds);
  positive("workers", workers);
  if (window_m != 1) throw ConfigError("config key 'window_m' must be 1");
  if (batch_size < 2) throw ConfigError("config key 'batch_size' must be at least 2");
  if (folds < 2) throw ConfigError("config key 'folds' must be at least 2");
  if (eval_folds < 1 || eval_folds >= folds) throw ConfigError("config key 'eval_folds' must be in 1..folds-1");
  if (std::isnan(gain_threshold)) throw ConfigError("config key 'gain_threshold' is not a number");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += k + " = " + get(k) + "\n";
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& k : keys()) doc[k] = get(k);
  return doc;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  apply_run_config(config, text, origin);
  return config;
}

void apply_run_config(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    try {
      config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_run_config_file(RunConfig& config, const std::string& path) {
  std::string text;
  try {
    text = metrics::read_text(path);
  } catch (const PersistenceError&) {
    throw ConfigError("cannot read config file '" + path + "'");
  }
  apply_run_config(config, text, path);
}

RunConfig load_run_config(const std::string& path) {
  RunConfig config;
  apply_run_config_file(config, path);
  return config;
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw PersistenceError("stored config is not an object");
  RunConfig config;
  for (const auto& [k, v] : doc.items()) {
    if (!v.is_string()) throw PersistenceError("stored config value '" + k + "' is not text");
    try {
      config.set(k, v.get<std::string>());
    } catch (const ConfigError& e) {
      throw PersistenceError(e.what());
    }
  }
  return config;
}

node::AutoencoderConfig autoencoder_config(const RunConfig& c) {
  node::AutoencoderConfig a;
  a.latent_dim = c.latent_dim;
  a.hidden = c.hidden;
  a.num_keys = c.num_keys;
  a.lr = c.lr;
  a.epochs = c.epochs;
  a.batch_size = c.batch_size;
  a.lambda_mask = c.lambda_mask;
  a.folds = c.folds;
  a.seed = c.seed;
  return a;
}

relation::EdgeTrainConfig edge_config(const RunConfig& c) {
  relation::EdgeTrainConfig e;
  e.window_n = c.window_n;
  e.window_m = c.window_m;
  e.hidden = c.hidden;
  e.lr = c.lr;
  e.epochs = c.edge_epochs;
  e.batch_size = c.batch_size;
  e.lambda_kld = c.lambda_kld;
  e.lambda_mask = c.lambda_mask;
  e.folds = c.folds;
  e.eval_folds = c.eval_folds;
  e.seed = c.seed;
  return e;
}

}  // namespace rirl::pipeline
