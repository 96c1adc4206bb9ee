#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "rirl/node_repr.hpp"
#include "rirl/relation.hpp"

namespace rirl::pipeline {

/// Run settings. Read from a flat `key = value` file; every key can be
/// overridden by name.
struct RunConfig {
  int latent_dim = 16;
  int num_keys = 4;
  int window_n = 10;
  int window_m = 1;
  double lr = 1e-3;
  int epochs = 200;
  int edge_epochs = 200;
  int hidden = 128;
  int batch_size = 64;
  double lambda_kld = 0.1;
  double lambda_mask = 1.0;
  int folds = 4;
  int eval_folds = 1;
  double gain_threshold = std::numeric_limits<double>::infinity();
  int max_rounds = 64;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string data;
  std::string models = "models";
  std::string reports = "reports";

  /// Sets one key from its text form. Throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  void validate() const;

  static const std::vector<std::string>& keys();

  /// Same flat format that `parse_run_config` reads.
  std::string to_text() const;
  nlohmann::json to_json() const;
};

RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
/// Applies only the keys present in `text` on top of `config`.
void apply_run_config(RunConfig& config, const std::string& text, const std::string& origin);
void apply_run_config_file(RunConfig& config, const std::string& path);
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json(const nlohmann::json& doc);

node::AutoencoderConfig autoencoder_config(const RunConfig& config);
relation::EdgeTrainConfig edge_config(const RunConfig& config);

}  // namespace rirl::pipeline
