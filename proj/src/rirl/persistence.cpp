#include "rirl/persistence.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rirl/error.hpp"

namespace rirl::io {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& doc, const char* name) {
  if (!doc.is_object() || !doc.contains(name)) throw PersistenceError(std::string("model document lacks '") + name + "'");
  try {
    return doc.at(name).get<T>();
  } catch (const json::exception& e) {
    throw PersistenceError(std::string("model field '") + name + "': " + e.what());
  }
}

void check_header(const json& doc, const char* kind) {
  const int version = field<int>(doc, "schema_version");
  if (version != kSchemaVersion)
    throw PersistenceError("schema version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kSchemaVersion) + ")");
  if (field<std::string>(doc, "kind") != kind)
    throw PersistenceError(std::string("document is not a ") + kind + " model");
}

std::vector<double> finite_values(const double* data, nn::Index size, const std::string& what) {
  std::vector<double> out(data, data + size);
  for (double v : out)
    if (!std::isfinite(v)) throw PersistenceError("non-finite value in '" + what + "'");
  return out;
}

json mlp_to_json(const nn::Mlp& mlp) {
  json layers = json::array();
  for (const auto& l : mlp.layers) layers.push_back(layer_to_json(l));
  return layers;
}

nn::Mlp mlp_from_json(const json& doc) {
  if (!doc.is_array() || doc.empty()) throw PersistenceError("layer stack must be a non-empty array");
  nn::Mlp mlp;
  for (const auto& l : doc) mlp.layers.push_back(layer_from_json(l));
  for (std::size_t i = 1; i < mlp.layers.size(); ++i)
    if (mlp.layers[i].in_dim() != mlp.layers[i - 1].out_dim())
      throw PersistenceError("layer '" + mlp.layers[i].name + "' does not chain with its predecessor");
  return mlp;
}

json metrics_to_json(const relation::MicroMetrics& m) {
  return {{"rmse_scaled", m.rmse_scaled}, {"rmse_unscaled", m.rmse_unscaled}, {"mask_bce", m.mask_bce},
          {"kld", m.kld},                 {"nse", m.nse},                     {"self_rmse_scaled", m.self_rmse_scaled},
          {"self_nse", m.self_nse}};
}

relation::MicroMetrics metrics_from_json(const json& doc) {
  relation::MicroMetrics m;
  m.rmse_scaled = field<double>(doc, "rmse_scaled");
  m.rmse_unscaled = field<double>(doc, "rmse_unscaled");
  m.mask_bce = field<double>(doc, "mask_bce");
  m.kld = field<double>(doc, "kld");
  m.nse = field<double>(doc, "nse");
  m.self_rmse_scaled = field<double>(doc, "self_rmse_scaled");
  m.self_nse = field<double>(doc, "self_nse");
  return m;
}

}  // namespace

json layer_to_json(const nn::DenseLayer& layer) {
  // row-major weights: entry (r, c) at r * in + c
  const nn::Matrix row_major = layer.weights.transpose();
  return {{"name", layer.name},
          {"in", layer.in_dim()},
          {"out", layer.out_dim()},
          {"activation", nn::activation_name(layer.activation)},
          {"weights", finite_values(row_major.data(), row_major.size(), layer.name)},
          {"bias", finite_values(layer.bias.data(), layer.bias.size(), layer.name)}};
}

nn::DenseLayer layer_from_json(const json& doc) {
  const auto name = field<std::string>(doc, "name");
  const auto in = field<nn::Index>(doc, "in");
  const auto out = field<nn::Index>(doc, "out");
  if (in < 1 || out < 1) throw PersistenceError("layer '" + name + "' has a non-positive shape");
  nn::Activation act;
  try {
    act = nn::parse_activation(field<std::string>(doc, "activation"));
  } catch (const ConfigError& e) {
    throw PersistenceError(e.what());
  }
  const auto weights = field<std::vector<double>>(doc, "weights");
  const auto bias = field<std::vector<double>>(doc, "bias");
  if (static_cast<nn::Index>(weights.size()) != in * out || static_cast<nn::Index>(bias.size()) != out)
    throw PersistenceError("layer '" + name + "': weight count does not match its shape");
  nn::DenseLayer layer(name, in, out, act);
  layer.weights = Eigen::Map<const nn::Matrix>(weights.data(), in, out).transpose();
  layer.bias = Eigen::Map<const nn::Vector>(bias.data(), out);
  return layer;
}

json node_model_to_json(const node::NodeAutoencoder& m) {
  json keys = json::array();
  for (const auto& k : m.keys)
    keys.push_back({{"key_id", k.key_id},
                    {"seed", k.seed},
                    {"scale_inner", k.scale_inner},
                    {"scale_outer", k.scale_outer},
                    {"shift_inner", k.shift_inner},
                    {"shift_outer", k.shift_outer}});
  return {{"schema_version", kSchemaVersion},
          {"kind", "node_autoencoder"},
          {"node", m.node},
          {"dim", m.dim},
          {"latent_dim", m.latent_dim},
          {"seed", m.seed},
          {"scaler", {{"mean", m.scaler.mean}, {"std", m.scaler.stddev}}},
          {"keys", keys},
          {"encoder", mlp_to_json(m.encoder)},
          {"decoder", mlp_to_json(m.decoder)},
          {"value_head", layer_to_json(m.value_head)},
          {"mask_head", layer_to_json(m.mask_head)}};
}

node::NodeAutoencoder node_model_from_json(const json& doc) {
  check_header(doc, "node_autoencoder");
  node::NodeAutoencoder m;
  m.node = field<std::string>(doc, "node");
  m.dim = field<int>(doc, "dim");
  m.latent_dim = field<int>(doc, "latent_dim");
  m.seed = field<std::uint64_t>(doc, "seed");
  const json scaler = field<json>(doc, "scaler");
  m.scaler.mean = field<std::vector<double>>(scaler, "mean");
  m.scaler.stddev = field<std::vector<double>>(scaler, "std");
  for (const auto& k : field<json>(doc, "keys")) {
    coupling::Key key;
    key.key_id = field<int>(k, "key_id");
    key.seed = field<std::uint64_t>(k, "seed");
    key.scale_inner = field<double>(k, "scale_inner");
    key.scale_outer = field<double>(k, "scale_outer");
    key.shift_inner = field<double>(k, "shift_inner");
    key.shift_outer = field<double>(k, "shift_outer");
    if (std::abs(key.scale_outer) > coupling::kMaxScaleGain) throw PersistenceError("key scale gain out of bounds");
    m.keys.push_back(key);
  }
  m.encoder = mlp_from_json(field<json>(doc, "encoder"));
  m.decoder = mlp_from_json(field<json>(doc, "decoder"));
  m.value_head = layer_from_json(field<json>(doc, "value_head"));
  m.mask_head = layer_from_json(field<json>(doc, "mask_head"));

  if (m.dim < 1 || m.dim > node::kTileLength || m.keys.empty()) throw PersistenceError("bad node dimension or key list");
  if (m.scaler.dim() != static_cast<std::size_t>(m.dim) || m.scaler.stddev.size() != m.scaler.mean.size())
    throw PersistenceError("scaler does not match node dimension");
  const nn::Index expanded = m.expanded_dim();
  if (m.encoder.in_dim() != expanded || m.encoder.out_dim() != m.latent_dim || m.decoder.in_dim() != m.latent_dim ||
      m.value_head.in_dim() != m.decoder.out_dim() || m.value_head.out_dim() != expanded ||
      m.mask_head.in_dim() != m.decoder.out_dim() || m.mask_head.out_dim() != m.dim)
    throw PersistenceError("node model '" + m.node + "': layer shapes are inconsistent");
  return m;
}

json micro_model_to_json(const relation::MicroCausalModel& m) {
  json causes = json::array();
  for (const auto& c : m.causes) causes.push_back(node_model_to_json(c));
  return {{"schema_version", kSchemaVersion},
          {"kind", "micro_causal"},
          {"relation",
           {{"causes", m.relation.causes},
            {"effect", m.relation.effect},
            {"window_n", m.relation.window_n},
            {"latent_dim", m.relation.latent_dim},
            {"layers", mlp_to_json(m.relation.net)}}},
          {"cause_models", causes},
          {"effect_model", node_model_to_json(m.effect)},
          {"metrics", metrics_to_json(m.metrics)},
          {"train_loss_history", m.train_loss_history}};
}

relation::MicroCausalModel micro_model_from_json(const json& doc) {
  check_header(doc, "micro_causal");
  relation::MicroCausalModel m;
  const json rel = field<json>(doc, "relation");
  m.relation.causes = field<std::vector<std::string>>(rel, "causes");
  m.relation.effect = field<std::string>(rel, "effect");
  m.relation.window_n = field<int>(rel, "window_n");
  m.relation.latent_dim = field<int>(rel, "latent_dim");
  m.relation.net = mlp_from_json(field<json>(rel, "layers"));
  for (const auto& c : field<json>(doc, "cause_models")) m.causes.push_back(node_model_from_json(c));
  m.effect = node_model_from_json(field<json>(doc, "effect_model"));
  m.metrics = metrics_from_json(field<json>(doc, "metrics"));
  m.train_loss_history = field<std::vector<double>>(doc, "train_loss_history");
  if (m.causes.size() != m.relation.causes.size() || m.relation.window_n < 1 ||
      m.relation.net.in_dim() != m.relation.input_dim() || m.relation.net.out_dim() != m.relation.latent_dim ||
      m.effect.latent_dim != m.relation.latent_dim)
    throw PersistenceError("micro-causal model '" + m.relation.id() + "': shapes are inconsistent");
  for (std::size_t i = 0; i < m.causes.size(); ++i)
    if (m.causes[i].node != m.relation.causes[i] || m.causes[i].latent_dim != m.relation.latent_dim)
      throw PersistenceError("micro-causal model '" + m.relation.id() + "': cause models out of order");
  return m;
}

std::string dump(const json& doc) { return doc.dump(1) + "\n"; }

void write_json(const std::string& path, const json& doc) {
  const std::string text = dump(doc);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PersistenceError("cannot open '" + tmp + "' for writing");
    out << text;
    out.flush();
    if (!out) throw PersistenceError("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw PersistenceError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::exception& e) {
    throw PersistenceError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void save_model(const node::NodeAutoencoder& model, const std::string& path) {
  write_json(path, node_model_to_json(model));
}

node::NodeAutoencoder load_model(const std::string& path) { return node_model_from_json(read_json(path)); }

void save_micro_model(const relation::MicroCausalModel& model, const std::string& path) {
  write_json(path, micro_model_to_json(model));
}

relation::MicroCausalModel load_micro_model(const std::string& path) {
  return micro_model_from_json(read_json(path));
}

}  // namespace rirl::io
