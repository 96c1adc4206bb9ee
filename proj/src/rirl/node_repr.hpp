#pragma once

// Per-node featurization and the invertible higher-dimensional autoencoder:
//   24 features -> Expander (K * 576) -> dense -> dense -> latent
//   latent -> dense -> value head (K * 576) -> Reducer -> 24 features
//                   \-> mask head (per-attribute non-zero probability)

#include <cstdint>
#include <string>
#include <vector>

#include "rirl/coupling.hpp"
#include "rirl/dataset.hpp"
#include "rirl/nn.hpp"

namespace rirl::node {

using nn::Index;
using nn::Matrix;
using nn::Vector;

inline constexpr int kTileLength = 12;
inline constexpr int kMonthSlots = 12;
inline constexpr int kFeatureLength = kTileLength + kMonthSlots;
inline constexpr double kMaskThreshold = 0.5;

/// Scaled attributes tiled cyclically over 12 slots (slot s holds attribute
/// s mod d), followed by the month one-hot.
Vector featurize_scaled(const Vector& scaled, int month);
Vector featurize(const Vector& raw, int month, const data::Scaler& scaler);
/// Inverse of the tiling: each attribute is the mean of its copies.
Vector defeaturize(const Vector& feature, int dim);
Matrix defeaturize(const Matrix& features, int dim);

struct AutoencoderConfig {
  int latent_dim = 16;
  int hidden = 128;
  int num_keys = 4;
  double lr = 1e-3;
  int epochs = 200;
  int batch_size = 64;
  double lambda_mask = 1.0;
  int folds = 4;
  std::uint64_t seed = 0;
  bool track_train_loss = false;
};

struct DecoderPass {
  nn::MlpTrace trunk;
  Matrix grid;
  Matrix recon;      // 24 x B
  Matrix mask_prob;  // d x B
};

struct DecodedNode {
  Vector scaled;     // gated, scaled space
  Vector values;     // gated, engineering units
  Vector mask_prob;
};

class NodeAutoencoder {
 public:
  std::string node;
  int dim = 0;
  int latent_dim = 0;
  std::uint64_t seed = 0;
  data::Scaler scaler;
  std::vector<coupling::Key> keys;
  nn::Mlp encoder;  // expanded -> hidden (tanh) -> latent
  nn::Mlp decoder;  // latent -> hidden (tanh)
  nn::DenseLayer value_head;  // hidden -> expanded
  nn::DenseLayer mask_head;   // hidden -> d (sigmoid)

  static NodeAutoencoder create(std::string node, int dim, data::Scaler scaler, const AutoencoderConfig& config);

  Index expanded_dim() const { return coupling::expanded_length(kFeatureLength, keys.size()); }
  int hidden() const { return static_cast<int>(encoder.layers.front().out_dim()); }

  Matrix expand(const Matrix& features) const { return coupling::expand(features, keys); }
  Matrix encode_expanded(const Matrix& expanded) const;
  Matrix encode_expanded(const Matrix& expanded, nn::MlpTrace& trace) const;
  Vector encode(const Vector& feature) const;

  void decode(const Matrix& latent, DecoderPass& pass) const;
  /// Accumulates decoder gradients and returns dL/d(latent).
  Matrix decode_backward(const DecoderPass& pass, const Matrix& grad_recon, const Matrix& grad_mask_logit);
  DecodedNode decode_node(const Vector& latent) const;

  void encoder_params(nn::ParamList& out) { encoder.collect(out); }
  void decoder_params(nn::ParamList& out);
  void zero_grad();
};

Vector encode_node(const NodeAutoencoder& model, const Vector& feature);
DecodedNode decode_node(const NodeAutoencoder& model, const Vector& latent);

/// Per-step model inputs for one node, computed once per dataset.
struct NodeTensors {
  std::string name;
  Matrix features;  // 24 x T
  Matrix mask;      // d x T
  Matrix scaled;    // d x T
  Matrix values;    // d x T

  Index length() const { return features.cols(); }
};

NodeTensors make_tensors(const data::NodeSeries& series, const NodeAutoencoder& model);

struct ReconLoss {
  nn::LossReport report;
  Matrix grad_recon;
  Matrix grad_mask_logit;
};

ReconLoss reconstruction_loss(const DecoderPass& pass, const Matrix& features, const Matrix& mask,
                              double lambda_mask);

/// One self-reconstruction update of encoder and decoder on a batch. When
/// `guarded`, a step that raises the batch loss is rolled back. Returns the
/// (loss before, loss after) pair.
std::pair<double, double> self_reconstruction_step(NodeAutoencoder& model, nn::Adam& encoder_opt, nn::Adam& decoder_opt,
                                                   const Matrix& expanded, const Matrix& features, const Matrix& mask,
                                                   double lambda_mask, bool guarded);

double self_reconstruction_loss(const NodeAutoencoder& model, const Matrix& expanded, const Matrix& features,
                                const Matrix& mask, double lambda_mask);

struct ReconMetrics {
  double rmse_scaled = 0.0;
  double rmse_unscaled = 0.0;
  double mask_bce = 0.0;
  double nse = 0.0;  // mean over attributes with non-constant truth
};

/// Scores a decoder pass against the truth columns it reconstructs.
ReconMetrics score_reconstruction(const NodeAutoencoder& model, const DecoderPass& pass, const Matrix& scaled_truth,
                                  const Matrix& values_truth, const Matrix& mask_truth);

ReconMetrics evaluate_self(const NodeAutoencoder& model, const NodeTensors& tensors, const std::vector<Index>& steps);

/// Plain training loop over the given steps. Appends per-epoch training loss
/// to `history` when non-null.
void fit_autoencoder(NodeAutoencoder& model, const NodeTensors& tensors, const std::vector<Index>& train_steps,
                     const AutoencoderConfig& config, std::vector<double>* history = nullptr);

struct NodeTrainResult {
  NodeAutoencoder model;
  ReconMetrics metrics;  // on the held-out (last) fold
  std::vector<double> train_loss_history;
};

/// Fits the scaler, trains on all folds but the last and scores the last.
NodeTrainResult train_node_autoencoder(const data::NodeSeries& series, const AutoencoderConfig& config);

/// Steps outside the held-out fold, and the held-out fold itself.
std::pair<std::vector<Index>, std::vector<Index>> holdout_split(Index steps, int folds, int heldout_fold,
                                                                Index first_valid = 0);

}  // namespace rirl::node
