#include "rirl/node_repr.hpp"

#include <algorithm>
#include <cmath>

#include "rirl/error.hpp"
#include "rirl/metrics.hpp"

namespace rirl::node {

namespace {

constexpr Index kEvalChunk = 1024;

void check_dim(Index dim) {
  if (dim < 1 || dim > kTileLength)
    throw ConfigError("node dimension must be in 1.." + std::to_string(kTileLength) + ", got " + std::to_string(dim));
}

}  // namespace

Vector featurize_scaled(const Vector& scaled, int month) {
  check_dim(scaled.size());
  if (month < 1 || month > kMonthSlots) throw ConfigError("month must be in 1..12, got " + std::to_string(month));
  Vector out = Vector::Zero(kFeatureLength);
  for (Index s = 0; s < kTileLength; ++s) out(s) = scaled(s % scaled.size());
  out(kTileLength + month - 1) = 1.0;
  return out;
}

Vector featurize(const Vector& raw, int month, const data::Scaler& scaler) {
  check_dim(raw.size());
  if (static_cast<std::size_t>(raw.size()) != scaler.dim()) throw ShapeError("featurize: scaler dimension mismatch");
  const Matrix raw_col = raw;
  const Vector scaled = data::scale_apply(scaler, raw_col, data::mask_of(raw_col)).col(0);
  return featurize_scaled(scaled, month);
}

Matrix defeaturize(const Matrix& features, int dim) {
  check_dim(dim);
  if (features.rows() != kFeatureLength) throw ShapeError("defeaturize: expected 24 feature rows");
  Matrix out = Matrix::Zero(dim, features.cols());
  for (Index s = 0; s < kTileLength; ++s) out.row(s % dim) += features.row(s);
  for (Index a = 0; a < dim; ++a) {
    const auto copies = static_cast<double>((kTileLength - a + dim - 1) / dim);
    out.row(a) /= copies;
  }
  return out;
}

Vector defeaturize(const Vector& feature, int dim) { return defeaturize(Matrix(feature), dim).col(0); }

NodeAutoencoder NodeAutoencoder::create(std::string node, int dim, data::Scaler scaler, const AutoencoderConfig& config) {
  check_dim(dim);
  if (config.latent_dim < 1 || config.hidden < 1) throw ConfigError("latent_dim and hidden must be positive");
  NodeAutoencoder m;
  m.node = std::move(node);
  m.dim = dim;
  m.latent_dim = config.latent_dim;
  m.seed = config.seed;
  m.scaler = std::move(scaler);
  m.keys = coupling::make_keys(substream_seed(config.seed, "keys." + m.node), config.num_keys);
  const Index expanded = m.expanded_dim();
  const Index hidden = config.hidden;
  const Index latent = config.latent_dim;
  m.encoder.layers = {nn::DenseLayer(m.node + ".enc0", expanded, hidden, nn::Activation::tanh),
                      nn::DenseLayer(m.node + ".enc1", hidden, latent, nn::Activation::identity)};
  m.decoder.layers = {nn::DenseLayer(m.node + ".dec0", latent, hidden, nn::Activation::tanh)};
  m.value_head = nn::DenseLayer(m.node + ".value", hidden, expanded, nn::Activation::identity);
  m.mask_head = nn::DenseLayer(m.node + ".mask", hidden, dim, nn::Activation::sigmoid);
  Rng rng = substream(config.seed, "init." + m.node);
  m.encoder.init_xavier(rng);
  m.decoder.init_xavier(rng);
  m.value_head.init_xavier(rng);
  m.mask_head.init_xavier(rng);
  return m;
}

Matrix NodeAutoencoder::encode_expanded(const Matrix& expanded) const { return encoder.forward(expanded); }

Matrix NodeAutoencoder::encode_expanded(const Matrix& expanded, nn::MlpTrace& trace) const {
  return encoder.forward(expanded, trace);
}

Vector NodeAutoencoder::encode(const Vector& feature) const {
  if (feature.size() != kFeatureLength) throw ShapeError("encode: feature length must be 24");
  return encode_expanded(expand(Matrix(feature))).col(0);
}

void NodeAutoencoder::decode(const Matrix& latent, DecoderPass& pass) const {
  if (latent.rows() != latent_dim) throw ShapeError("decode: latent length " + std::to_string(latent.rows()) +
                                                    ", expected " + std::to_string(latent_dim));
  const Matrix& hidden = decoder.forward(latent, pass.trunk);
  pass.grid = value_head.forward(hidden);
  pass.mask_prob = mask_head.forward(hidden);
  pass.recon = coupling::reduce(pass.grid, keys);
}

Matrix NodeAutoencoder::decode_backward(const DecoderPass& pass, const Matrix& grad_recon, const Matrix& grad_mask_logit) {
  const Matrix& hidden = pass.trunk.output();
  const Matrix grad_grid = coupling::reduce_backward(pass.grid, keys, grad_recon);
  Matrix grad_hidden = value_head.backward_preactivation(hidden, grad_grid);
  grad_hidden += mask_head.backward_preactivation(hidden, grad_mask_logit);
  return decoder.backward(pass.trunk, grad_hidden);
}

DecodedNode NodeAutoencoder::decode_node(const Vector& latent) const {
  DecoderPass pass;
  decode(Matrix(latent), pass);
  const Matrix pred = defeaturize(pass.recon, dim);
  const Matrix gate = (pass.mask_prob.array() > kMaskThreshold).cast<double>();
  DecodedNode out;
  out.mask_prob = pass.mask_prob.col(0);
  out.scaled = pred.cwiseProduct(gate).col(0);
  out.values = data::scale_invert(scaler, pred, gate).col(0);
  return out;
}

void NodeAutoencoder::decoder_params(nn::ParamList& out) {
  decoder.collect(out);
  value_head.collect(out);
  mask_head.collect(out);
}

void NodeAutoencoder::zero_grad() {
  encoder.zero_grad();
  decoder.zero_grad();
  value_head.zero_grad();
  mask_head.zero_grad();
}

Vector encode_node(const NodeAutoencoder& model, const Vector& feature) { return model.encode(feature); }
DecodedNode decode_node(const NodeAutoencoder& model, const Vector& latent) { return model.decode_node(latent); }

NodeTensors make_tensors(const data::NodeSeries& series, const NodeAutoencoder& model) {
  if (series.dim() != model.dim) throw ShapeError("node '" + series.name + "': dimension differs from its model");
  NodeTensors t;
  t.name = series.name;
  t.values = series.values;
  t.mask = series.mask;
  t.scaled = data::scale_apply(model.scaler, series.values, series.mask);
  t.features.resize(kFeatureLength, series.length());
  for (Index s = 0; s < series.length(); ++s)
    t.features.col(s) = featurize_scaled(t.scaled.col(s), series.month[static_cast<std::size_t>(s)]);
  return t;
}

ReconLoss reconstruction_loss(const DecoderPass& pass, const Matrix& features, const Matrix& mask, double lambda_mask) {
  ReconLoss out;
  const double value = nn::mse_loss(pass.recon, features);
  const double mask_loss = nn::bce_loss(pass.mask_prob, mask);
  out.report = nn::LossReport::combine(value, mask_loss, 0.0, {lambda_mask, 0.0});
  out.grad_recon = nn::mse_grad(pass.recon, features);
  out.grad_mask_logit = lambda_mask * nn::bce_logit_grad(pass.mask_prob, mask);
  return out;
}

double self_reconstruction_loss(const NodeAutoencoder& model, const Matrix& expanded, const Matrix& features,
                                const Matrix& mask, double lambda_mask) {
  DecoderPass pass;
  model.decode(model.encode_expanded(expanded), pass);
  return nn::mse_loss(pass.recon, features) + lambda_mask * nn::bce_loss(pass.mask_prob, mask);
}

std::pair<double, double> self_reconstruction_step(NodeAutoencoder& model, nn::Adam& encoder_opt, nn::Adam& decoder_opt,
                                                   const Matrix& expanded, const Matrix& features, const Matrix& mask,
                                                   double lambda_mask, bool guarded) {
  nn::ParamList enc;
  nn::ParamList dec;
  model.encoder_params(enc);
  model.decoder_params(dec);
  nn::zero_grads(enc);
  nn::zero_grads(dec);

  nn::MlpTrace trace;
  const Matrix latent = model.encode_expanded(expanded, trace);
  DecoderPass pass;
  model.decode(latent, pass);
  const ReconLoss loss = reconstruction_loss(pass, features, mask, lambda_mask);
  if (!std::isfinite(loss.report.total)) throw TrainingError("node '" + model.node + "': non-finite loss");
  const Matrix grad_latent = model.decode_backward(pass, loss.grad_recon, loss.grad_mask_logit);
  model.encoder.backward(trace, grad_latent);

  std::vector<Vector> saved_enc;
  std::vector<Vector> saved_dec;
  if (guarded) {
    saved_enc = nn::snapshot(enc);
    saved_dec = nn::snapshot(dec);
  }
  encoder_opt.step(enc);
  decoder_opt.step(dec);
  if (!guarded) return {loss.report.total, loss.report.total};
  const double after = self_reconstruction_loss(model, expanded, features, mask, lambda_mask);
  if (!(after <= loss.report.total)) {
    nn::restore(enc, saved_enc);
    nn::restore(dec, saved_dec);
    return {loss.report.total, loss.report.total};
  }
  return {loss.report.total, after};
}

ReconMetrics score_reconstruction(const NodeAutoencoder& model, const DecoderPass& pass, const Matrix& scaled_truth,
                                  const Matrix& values_truth, const Matrix& mask_truth) {
  const Matrix pred = defeaturize(pass.recon, model.dim);
  const Matrix gate = (pass.mask_prob.array() > kMaskThreshold).cast<double>();
  const Matrix gated = pred.cwiseProduct(gate);
  const Matrix values = data::scale_invert(model.scaler, pred, gate);
  ReconMetrics m;
  m.rmse_scaled = metrics::rmse(gated, scaled_truth);
  m.rmse_unscaled = metrics::rmse(values, values_truth);
  m.mask_bce = nn::bce_loss(pass.mask_prob, mask_truth);
  double nse_sum = 0.0;
  int nse_count = 0;
  for (Index a = 0; a < values.rows(); ++a) {
    const Vector obs = values_truth.row(a).transpose();
    if (obs.size() < 2 || obs.maxCoeff() == obs.minCoeff()) continue;
    nse_sum += metrics::nse(values.row(a).transpose(), obs);
    ++nse_count;
  }
  m.nse = nse_count > 0 ? nse_sum / nse_count : 0.0;
  return m;
}

ReconMetrics evaluate_self(const NodeAutoencoder& model, const NodeTensors& tensors, const std::vector<Index>& steps) {
  const auto n = static_cast<Index>(steps.size());
  DecoderPass all;
  all.recon.resize(kFeatureLength, n);
  all.mask_prob.resize(model.dim, n);
  for (Index begin = 0; begin < n; begin += kEvalChunk) {
    const Index len = std::min(kEvalChunk, n - begin);
    const std::vector<Index> idx(steps.begin() + begin, steps.begin() + begin + len);
    DecoderPass pass;
    model.decode(model.encode_expanded(model.expand(tensors.features(Eigen::all, idx))), pass);
    all.recon.middleCols(begin, len) = pass.recon;
    all.mask_prob.middleCols(begin, len) = pass.mask_prob;
  }
  return score_reconstruction(model, all, tensors.scaled(Eigen::all, steps), tensors.values(Eigen::all, steps),
                              tensors.mask(Eigen::all, steps));
}

void fit_autoencoder(NodeAutoencoder& model, const NodeTensors& tensors, const std::vector<Index>& train_steps,
                     const AutoencoderConfig& config, std::vector<double>* history) {
  if (train_steps.empty()) throw TrainingError("node '" + model.node + "': no training steps");
  if (config.batch_size < 1 || config.epochs < 0) throw ConfigError("batch_size and epochs must be positive");
  nn::Adam enc_opt({config.lr});
  nn::Adam dec_opt({config.lr});
  Rng order_rng = substream(config.seed, "order." + model.node);
  std::vector<Index> order = train_steps;
  const auto n = static_cast<Index>(order.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double sum = 0.0;
    for (Index begin = 0; begin < n; begin += config.batch_size) {
      const Index len = std::min<Index>(config.batch_size, n - begin);
      const std::vector<Index> idx(order.begin() + begin, order.begin() + begin + len);
      const auto [before, after] =
          self_reconstruction_step(model, enc_opt, dec_opt, model.expand(tensors.features(Eigen::all, idx)),
                                   tensors.features(Eigen::all, idx), tensors.mask(Eigen::all, idx),
                                   config.lambda_mask, false);
      sum += before * static_cast<double>(len);
    }
    if (history) {
      if (config.track_train_loss) {
        double total = 0.0;
        for (Index begin = 0; begin < n; begin += kEvalChunk) {
          const Index len = std::min(kEvalChunk, n - begin);
          const std::vector<Index> idx(train_steps.begin() + begin, train_steps.begin() + begin + len);
          const Matrix feats = tensors.features(Eigen::all, idx);
          total += self_reconstruction_loss(model, model.expand(feats), feats,
                                            tensors.mask(Eigen::all, idx), config.lambda_mask) *
                   static_cast<double>(len);
        }
        history->push_back(total / static_cast<double>(n));
      } else {
        history->push_back(sum / static_cast<double>(n));
      }
    }
  }
}

std::pair<std::vector<Index>, std::vector<Index>> holdout_split(Index steps, int folds, int heldout_fold,
                                                                Index first_valid) {
  const auto plan = data::kfold_split(steps, folds);
  const int fold = heldout_fold < 0 ? folds - 1 : heldout_fold;
  if (fold >= folds) throw ConfigError("held-out fold " + std::to_string(fold) + " out of range");
  const auto [lo, hi] = plan.blocks[static_cast<std::size_t>(fold)];
  std::vector<Index> train;
  std::vector<Index> heldout;
  for (Index t = first_valid; t < steps; ++t) (t >= lo && t < hi ? heldout : train).push_back(t);
  return {train, heldout};
}

NodeTrainResult train_node_autoencoder(const data::NodeSeries& series, const AutoencoderConfig& config) {
  if (series.length() < 100)
    throw DataError("node '" + series.name + "': series has " + std::to_string(series.length()) +
                    " steps, need at least 100");
  bool any_variation = false;
  for (Index a = 0; a < series.dim(); ++a)
    any_variation |= series.values.row(a).maxCoeff() != series.values.row(a).minCoeff();
  if (!any_variation) throw TrainingError("node '" + series.name + "': degenerate series (no attribute varies)");

  NodeTrainResult result{NodeAutoencoder::create(series.name, static_cast<int>(series.dim()), data::scale_fit(series),
                                                 config),
                         {},
                         {}};
  const NodeTensors tensors = make_tensors(series, result.model);
  const auto [train, heldout] = holdout_split(series.length(), config.folds, -1);
  fit_autoencoder(result.model, tensors, train, config, &result.train_loss_history);
  result.metrics = evaluate_self(result.model, tensors, heldout);
  return result;
}

}  // namespace rirl::node
