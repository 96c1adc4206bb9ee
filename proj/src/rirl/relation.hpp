#pragma once

// Relation bridge between cause latents and an effect latent, its three-step
// training, the per-node stacking registry and multi-hop routing.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rirl/dataset.hpp"
#include "rirl/node_repr.hpp"

namespace rirl::relation {

using nn::Index;
using nn::Matrix;
using nn::Vector;

struct EdgeTrainConfig {
  int window_n = 10;
  int window_m = 1;
  int hidden = 128;
  double lr = 1e-3;
  int epochs = 200;
  int batch_size = 64;
  double lambda_kld = 0.1;
  double lambda_mask = 1.0;
  int folds = 4;
  int eval_folds = 1;  // trailing folds held out in turn; metrics are averaged
  std::uint64_t seed = 0;
};

/// "B,C->D"
std::string relation_id(const std::vector<std::string>& causes, const std::string& effect);
/// Splits an id back into (causes, effect). Throws ConfigError on bad syntax.
std::pair<std::vector<std::string>, std::string> parse_relation_id(const std::string& id);

struct RelationModel {
  std::vector<std::string> causes;
  std::string effect;
  int window_n = 0;
  int latent_dim = 0;
  nn::Mlp net;  // causes * window_n * L -> hidden (tanh) -> L

  std::string id() const { return relation_id(causes, effect); }
  Index input_dim() const { return static_cast<Index>(causes.size()) * window_n * latent_dim; }

  static RelationModel create(std::vector<std::string> causes, std::string effect, int window_n, int latent_dim,
                              int hidden, std::uint64_t seed);
};

struct MicroMetrics {
  double rmse_scaled = 0.0;    // effect decoded from the relation latent
  double rmse_unscaled = 0.0;
  double mask_bce = 0.0;
  double kld = 0.0;            // KL(stats(v_hat) || stats(v)) on held-out steps
  double nse = 0.0;
  double self_rmse_scaled = 0.0;  // effect decoded from its own latent
  double self_nse = 0.0;
};

struct MicroCausalModel {
  std::vector<node::NodeAutoencoder> causes;  // fine-tuned copies, in relation order
  RelationModel relation;
  node::NodeAutoencoder effect;
  MicroMetrics metrics;
  std::vector<double> train_loss_history;  // step-1 loss per epoch

  std::string id() const { return relation.id(); }
};

/// Initialized node models with their precomputed per-step tensors.
struct NodeBank {
  std::map<std::string, node::NodeAutoencoder> models;
  std::map<std::string, node::NodeTensors> tensors;

  static NodeBank build(const data::Dataset& data, std::map<std::string, node::NodeAutoencoder> models);
  const node::NodeAutoencoder& model(const std::string& name) const;
  const node::NodeTensors& tensor(const std::string& name) const;
};

MicroCausalModel train_micro_causal(const std::vector<std::string>& causes, const std::string& effect,
                                    const NodeBank& bank, const EdgeTrainConfig& config);

/// Relation latents for every effect time in `times` (each needs a full cause window).
Matrix predict_latents(const MicroCausalModel& model, const std::vector<const node::NodeTensors*>& cause_tensors,
                       const std::vector<Index>& times);

/// Scores the model on the given effect times.
MicroMetrics evaluate_micro_causal(const MicroCausalModel& model, const NodeBank& bank, const std::vector<Index>& times);

struct CauseWindow {
  Matrix values;            // d x window_n, engineering units, oldest step first
  std::vector<int> months;  // window_n entries
};

struct RelationOutput {
  Vector latent;
  node::DecodedNode decoded;
};

/// One window per cause, in relation order.
RelationOutput relation_forward(const MicroCausalModel& model, const std::vector<CauseWindow>& windows);

// --- stacking ---------------------------------------------------------------

struct StackComponent {
  std::string relation_id;
  int tau = 0;
};

struct StackState {
  std::map<std::string, std::vector<StackComponent>> components;  // per effect node

  int count(const std::string& effect) const;
  bool contains(const std::string& relation_id) const;
};

struct StackResult {
  StackComponent component;
  bool bound_ok = true;
  std::string warning;
};

/// Numerical rank of a d x T data matrix.
int estimate_rank(const Matrix& values);

/// Appends a component at `effect` and checks latent_dim > rank + T.
StackResult stack_component(StackState& state, const std::string& effect, const std::string& relation_id,
                            int latent_dim, int data_rank);

// --- routing ----------------------------------------------------------------

enum class RouteInput { raw_node, cause_latent };
enum class RouteOutput { own_latent, relation_latent };

struct RoutingSpec {
  RouteInput input = RouteInput::raw_node;
  RouteOutput output = RouteOutput::relation_latent;
  std::vector<std::string> path;  // relation ids, upstream first
};

using Registry = std::map<std::string, const MicroCausalModel*>;

struct RouteResult {
  Matrix latent;  // terminal effect latent, L x times
  Matrix values;  // terminal effect, gated engineering units
  Matrix scaled;
  Matrix mask_prob;
};

/// Runs the path for each final effect time. With `cause_latent` input,
/// `first_latents` supplies the first relation's per-step cause latents
/// (one L x T matrix per cause) instead of encoding raw data.
RouteResult route(const RoutingSpec& spec, const Registry& registry, const StackState& stack, const NodeBank& bank,
                  const std::vector<Index>& times, const std::vector<Matrix>* first_latents = nullptr);

}  // namespace rirl::relation
