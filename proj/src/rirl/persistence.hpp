#pragma once

// Versioned JSON documents for trained models. Weights are stored as JSON
// numbers, which round-trip doubles exactly.

#include <string>

#include <json.hpp>

#include "rirl/node_repr.hpp"
#include "rirl/relation.hpp"

namespace rirl::io {

inline constexpr int kSchemaVersion = 1;

nlohmann::json layer_to_json(const nn::DenseLayer& layer);
nn::DenseLayer layer_from_json(const nlohmann::json& doc);

nlohmann::json node_model_to_json(const node::NodeAutoencoder& model);
node::NodeAutoencoder node_model_from_json(const nlohmann::json& doc);

nlohmann::json micro_model_to_json(const relation::MicroCausalModel& model);
relation::MicroCausalModel micro_model_from_json(const nlohmann::json& doc);

/// Pretty-printed document with a trailing newline.
std::string dump(const nlohmann::json& doc);
/// Writes through a temporary file and renames, so readers never see a partial file.
void write_json(const std::string& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::string& path);

void save_model(const node::NodeAutoencoder& model, const std::string& path);
node::NodeAutoencoder load_model(const std::string& path);
void save_micro_model(const relation::MicroCausalModel& model, const std::string& path);
relation::MicroCausalModel load_micro_model(const std::string& path);

}  // namespace rirl::io
