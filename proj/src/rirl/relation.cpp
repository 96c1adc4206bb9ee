#include "rirl/relation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rirl/error.hpp"
#include "rirl/gaussian.hpp"

namespace rirl::relation {

namespace {

constexpr Index kEvalChunk = 512;

using Run = std::pair<Index, Index>;  // [begin, end) of effect times

// Splits sorted times into contiguous runs, then cuts runs into chunks of at
// most `size` steps. A 1-step tail is merged into the previous chunk so batch
// statistics stay defined.
std::vector<Run> make_chunks(const std::vector<Index>& times, Index size) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!runs.empty() && runs.back().second == times[i])
      ++runs.back().second;
    else
      runs.push_back({times[i], times[i] + 1});
  }
  std::vector<Run> chunks;
  for (const auto& [lo, hi] : runs) {
    for (Index b = lo; b < hi; b += size) chunks.push_back({b, std::min(hi, b + size)});
    if (chunks.size() >= 2 && chunks.back().second - chunks.back().first == 1 &&
        chunks[chunks.size() - 2].second == chunks.back().first) {
      chunks[chunks.size() - 2].second = chunks.back().second;
      chunks.pop_back();
    }
  }
  return chunks;
}

// Relation input for effect times [t0, t1): cause c, window slot k holds the
// latent of step t - n + 1 + k. `latents[c]` column 0 is step t0 - n + 1.
Matrix gather_input(const std::vector<Matrix>& latents, int n, Index batch) {
  const Index L = latents.front().rows();
  const auto C = static_cast<Index>(latents.size());
  Matrix x(C * n * L, batch);
  for (Index c = 0; c < C; ++c)
    for (Index k = 0; k < n; ++k) x.middleRows((c * n + k) * L, L) = latents[static_cast<std::size_t>(c)].middleCols(k, batch);
  return x;
}

std::vector<Matrix> scatter_grad(const Matrix& grad_x, std::size_t causes, int n, Index L) {
  const Index batch = grad_x.cols();
  std::vector<Matrix> out(causes, Matrix::Zero(L, batch + n - 1));
  for (std::size_t c = 0; c < causes; ++c)
    for (Index k = 0; k < n; ++k)
      out[c].middleCols(k, batch) += grad_x.middleRows((static_cast<Index>(c) * n + k) * L, L);
  return out;
}

void check_config(const EdgeTrainConfig& config) {
  if (config.window_n < 1) throw ConfigError("window_n must be positive");
  if (config.window_m != 1) throw ConfigError("window_m must be 1");
  if (config.hidden < 1 || config.batch_size < 2 || config.epochs < 0 || !(config.lr > 0.0))
    throw ConfigError("edge training needs hidden >= 1, batch_size >= 2, epochs >= 0, lr > 0");
  if (config.eval_folds < 1 || config.eval_folds >= config.folds)
    throw ConfigError("eval_folds must be in 1..folds-1");
}

struct Optimizers {
  std::vector<nn::Adam> cause_enc;
  std::vector<nn::Adam> cause_dec;
  nn::Adam relation;
  nn::Adam effect_enc;
  nn::Adam effect_dec;

  Optimizers(std::size_t causes, double lr)
      : cause_enc(causes, nn::Adam({lr})),
        cause_dec(causes, nn::Adam({lr})),
        relation({lr}),
        effect_enc({lr}),
        effect_dec({lr}) {}
};

double step_one(MicroCausalModel& m, Optimizers& opt, const std::vector<const node::NodeTensors*>& ct,
                const node::NodeTensors& et, Run chunk, const EdgeTrainConfig& config) {
  const int n = config.window_n;
  const Index batch = chunk.second - chunk.first;
  const Index base = chunk.first - n + 1;
  const Index span = batch + n - 1;

  std::vector<nn::ParamList> cause_params(m.causes.size());
  nn::ParamList rel_params;
  nn::ParamList dec_params;
  for (std::size_t c = 0; c < m.causes.size(); ++c) m.causes[c].encoder_params(cause_params[c]);
  m.relation.net.collect(rel_params);
  m.effect.decoder_params(dec_params);
  for (auto& p : cause_params) nn::zero_grads(p);
  nn::zero_grads(rel_params);
  nn::zero_grads(dec_params);

  std::vector<nn::MlpTrace> traces(m.causes.size());
  std::vector<Matrix> latents;
  for (std::size_t c = 0; c < m.causes.size(); ++c) {
    const Matrix feats = ct[c]->features.middleCols(base, span);
    latents.push_back(m.causes[c].encode_expanded(m.causes[c].expand(feats), traces[c]));
  }
  nn::MlpTrace rel_trace;
  const Matrix v_hat = m.relation.net.forward(gather_input(latents, n, batch), rel_trace);

  const Matrix y_feats = et.features.middleCols(chunk.first, batch);
  const Matrix y_mask = et.mask.middleCols(chunk.first, batch);
  const Matrix v = m.effect.encode_expanded(m.effect.expand(y_feats));
  const explore::GaussianStats target = explore::gaussian_stats(v);
  const double kld = explore::gaussian_kld(explore::gaussian_stats(v_hat), target);

  node::DecoderPass pass;
  m.effect.decode(v_hat, pass);
  const node::ReconLoss recon = node::reconstruction_loss(pass, y_feats, y_mask, config.lambda_mask);
  const double total = recon.report.total + config.lambda_kld * kld;
  if (!std::isfinite(total)) throw TrainingError("relation '" + m.id() + "': non-finite loss");

  Matrix grad_v_hat = m.effect.decode_backward(pass, recon.grad_recon, recon.grad_mask_logit);
  grad_v_hat += config.lambda_kld * explore::gaussian_kld_grad(v_hat, target);
  const Matrix grad_x = m.relation.net.backward(rel_trace, grad_v_hat);
  const auto grad_lat = scatter_grad(grad_x, m.causes.size(), n, m.relation.latent_dim);
  for (std::size_t c = 0; c < m.causes.size(); ++c) m.causes[c].encoder.backward(traces[c], grad_lat[c]);

  for (std::size_t c = 0; c < m.causes.size(); ++c) opt.cause_enc[c].step(cause_params[c]);
  opt.relation.step(rel_params);
  opt.effect_dec.step(dec_params);
  return total;
}

MicroCausalModel train_once(const std::vector<std::string>& causes, const std::string& effect, const NodeBank& bank,
                            const EdgeTrainConfig& config, const std::vector<Index>& train_times) {
  const node::NodeAutoencoder& effect_init = bank.model(effect);
  MicroCausalModel m;
  for (const auto& c : causes) m.causes.push_back(bank.model(c));
  m.effect = effect_init;
  m.relation = RelationModel::create(causes, effect, config.window_n, effect_init.latent_dim, config.hidden,
                                     substream_seed(config.seed, "relation." + relation_id(causes, effect)));

  std::vector<const node::NodeTensors*> ct;
  for (const auto& c : causes) ct.push_back(&bank.tensor(c));
  const node::NodeTensors& et = bank.tensor(effect);

  Optimizers opt(causes.size(), config.lr);
  std::vector<Run> chunks = make_chunks(train_times, config.batch_size);
  Rng order = substream(config.seed, "order.relation." + m.id());
  const int n = config.window_n;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(chunks.begin(), chunks.end(), order);
    double sum = 0.0;
    for (const Run& chunk : chunks) {
      const Index batch = chunk.second - chunk.first;
      sum += step_one(m, opt, ct, et, chunk, config) * static_cast<double>(batch);

      const Matrix y_feats = et.features.middleCols(chunk.first, batch);
      node::self_reconstruction_step(m.effect, opt.effect_enc, opt.effect_dec, m.effect.expand(y_feats), y_feats,
                                     et.mask.middleCols(chunk.first, batch), config.lambda_mask, true);

      const Index base = chunk.first - n + 1;
      for (std::size_t c = 0; c < m.causes.size(); ++c) {
        const Matrix x_feats = ct[c]->features.middleCols(base, batch + n - 1);
        node::self_reconstruction_step(m.causes[c], opt.cause_enc[c], opt.cause_dec[c], m.causes[c].expand(x_feats),
                                       x_feats, ct[c]->mask.middleCols(base, batch + n - 1), config.lambda_mask, true);
      }
    }
    m.train_loss_history.push_back(sum / static_cast<double>(train_times.size()));
  }
  return m;
}

}  // namespace

std::string relation_id(const std::vector<std::string>& causes, const std::string& effect) {
  std::string out;
  for (std::size_t i = 0; i < causes.size(); ++i) out += (i ? "," : "") + causes[i];
  return out + "->" + effect;
}

std::pair<std::vector<std::string>, std::string> parse_relation_id(const std::string& id) {
  const auto arrow = id.find("->");
  if (arrow == std::string::npos || arrow == 0 || arrow + 2 >= id.size())
    throw ConfigError("bad relation id '" + id + "'");
  std::vector<std::string> causes;
  std::string cur;
  for (char ch : id.substr(0, arrow)) {
    if (ch == ',') {
      causes.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  causes.push_back(cur);
  for (const auto& c : causes)
    if (c.empty()) throw ConfigError("bad relation id '" + id + "'");
  return {causes, id.substr(arrow + 2)};
}

RelationModel RelationModel::create(std::vector<std::string> causes, std::string effect, int window_n, int latent_dim,
                                    int hidden, std::uint64_t seed) {
  if (causes.empty()) throw ConfigError("relation needs at least one cause");
  RelationModel r;
  r.causes = std::move(causes);
  r.effect = std::move(effect);
  r.window_n = window_n;
  r.latent_dim = latent_dim;
  const std::string name = r.id();
  r.net.layers = {nn::DenseLayer(name + ".rel0", r.input_dim(), hidden, nn::Activation::tanh),
                  nn::DenseLayer(name + ".rel1", hidden, latent_dim, nn::Activation::identity)};
  Rng rng(seed);
  r.net.init_xavier(rng);
  return r;
}

NodeBank NodeBank::build(const data::Dataset& data, std::map<std::string, node::NodeAutoencoder> models) {
  NodeBank bank;
  for (const auto& [name, model] : models) bank.tensors.emplace(name, node::make_tensors(data.node(name), model));
  bank.models = std::move(models);
  return bank;
}

const node::NodeAutoencoder& NodeBank::model(const std::string& name) const {
  const auto it = models.find(name);
  if (it == models.end()) throw ConfigError("no model for node '" + name + "'");
  return it->second;
}

const node::NodeTensors& NodeBank::tensor(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw ConfigError("no data for node '" + name + "'");
  return it->second;
}

MicroCausalModel train_micro_causal(const std::vector<std::string>& causes, const std::string& effect,
                                    const NodeBank& bank, const EdgeTrainConfig& config) {
  check_config(config);
  if (causes.empty()) throw ConfigError("relation needs at least one cause");
  std::set<std::string> seen;
  for (const auto& c : causes) {
    if (c == effect) throw ConfigError("node '" + c + "' cannot cause itself");
    if (!seen.insert(c).second) throw ConfigError("duplicate cause '" + c + "'");
    bank.model(c);
  }
  const Index steps = bank.tensor(effect).length();
  for (const auto& c : causes)
    if (bank.tensor(c).length() != steps) throw DataError("node '" + c + "' has a different series length");
  if (steps < 10 * config.folds)
    throw TrainingError("relation '" + relation_id(causes, effect) + "': series too short for folding");

  MicroCausalModel result;
  MicroMetrics sum;
  for (int fold = config.folds - config.eval_folds; fold < config.folds; ++fold) {
    const auto [train, heldout] = node::holdout_split(steps, config.folds, fold, config.window_n - 1);
    if (train.size() < 50)
      throw TrainingError("relation '" + relation_id(causes, effect) + "': only " + std::to_string(train.size()) +
                          " training pairs, need 50");
    if (heldout.size() < 2) throw TrainingError("relation '" + relation_id(causes, effect) + "': held-out fold too short");
    result = train_once(causes, effect, bank, config, train);
    const MicroMetrics m = evaluate_micro_causal(result, bank, heldout);
    sum.rmse_scaled += m.rmse_scaled;
    sum.rmse_unscaled += m.rmse_unscaled;
    sum.mask_bce += m.mask_bce;
    sum.kld += m.kld;
    sum.nse += m.nse;
    sum.self_rmse_scaled += m.self_rmse_scaled;
    sum.self_nse += m.self_nse;
  }
  const double k = config.eval_folds;
  result.metrics = {sum.rmse_scaled / k, sum.rmse_unscaled / k, sum.mask_bce / k, sum.kld / k,
                    sum.nse / k,         sum.self_rmse_scaled / k, sum.self_nse / k};
  if (!std::isfinite(result.metrics.kld)) throw TrainingError("relation '" + result.id() + "': non-finite KLD");
  return result;
}

Matrix predict_latents(const MicroCausalModel& model, const std::vector<const node::NodeTensors*>& cause_tensors,
                       const std::vector<Index>& times) {
  if (cause_tensors.size() != model.causes.size()) throw ShapeError("predict_latents: cause count mismatch");
  const int n = model.relation.window_n;
  Matrix out(model.relation.latent_dim, static_cast<Index>(times.size()));
  std::vector<Index> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  if (!sorted.empty() && sorted.front() < n - 1) throw DataError("effect time " + std::to_string(sorted.front()) + " lacks a full cause window");
  for (const auto* t : cause_tensors)
    if (!sorted.empty() && sorted.back() >= t->length()) throw DataError("effect time beyond series end");
  std::map<Index, Index> column;
  for (std::size_t i = 0; i < times.size(); ++i) column[times[i]] = static_cast<Index>(i);
  for (const Run& chunk : make_chunks(sorted, kEvalChunk)) {
    const Index batch = chunk.second - chunk.first;
    const Index base = chunk.first - n + 1;
    std::vector<Matrix> latents;
    for (std::size_t c = 0; c < model.causes.size(); ++c)
      latents.push_back(model.causes[c].encode_expanded(
          model.causes[c].expand(cause_tensors[c]->features.middleCols(base, batch + n - 1))));
    const Matrix v_hat = model.relation.net.forward(gather_input(latents, n, batch));
    for (Index j = 0; j < batch; ++j) out.col(column.at(chunk.first + j)) = v_hat.col(j);
  }
  return out;
}

MicroMetrics evaluate_micro_causal(const MicroCausalModel& model, const NodeBank& bank, const std::vector<Index>& times) {
  std::vector<const node::NodeTensors*> ct;
  for (const auto& c : model.relation.causes) ct.push_back(&bank.tensor(c));
  const node::NodeTensors& et = bank.tensor(model.relation.effect);
  const Matrix v_hat = predict_latents(model, ct, times);
  const Matrix feats = et.features(Eigen::all, times);
  const Matrix v = model.effect.encode_expanded(model.effect.expand(feats));

  MicroMetrics m;
  m.kld = explore::gaussian_kld(explore::gaussian_stats(v_hat), explore::gaussian_stats(v));
  node::DecoderPass pass;
  model.effect.decode(v_hat, pass);
  const node::ReconMetrics rel = node::score_reconstruction(model.effect, pass, et.scaled(Eigen::all, times),
                                                            et.values(Eigen::all, times), et.mask(Eigen::all, times));
  m.rmse_scaled = rel.rmse_scaled;
  m.rmse_unscaled = rel.rmse_unscaled;
  m.mask_bce = rel.mask_bce;
  m.nse = rel.nse;
  const node::ReconMetrics self = node::evaluate_self(model.effect, et, times);
  m.self_rmse_scaled = self.rmse_scaled;
  m.self_nse = self.nse;
  return m;
}

RelationOutput relation_forward(const MicroCausalModel& model, const std::vector<CauseWindow>& windows) {
  const int n = model.relation.window_n;
  if (windows.size() != model.causes.size())
    throw DataError("relation '" + model.id() + "': expected " + std::to_string(model.causes.size()) + " cause windows");
  std::vector<Matrix> latents;
  for (std::size_t c = 0; c < windows.size(); ++c) {
    const auto& w = windows[c];
    const auto& ae = model.causes[c];
    if (w.values.cols() != n || static_cast<Index>(w.months.size()) != n)
      throw DataError("cause '" + ae.node + "': window has " + std::to_string(w.values.cols()) + " steps, need " +
                      std::to_string(n));
    if (w.values.rows() != ae.dim) throw ShapeError("cause '" + ae.node + "': window dimension mismatch");
    if (!w.values.allFinite()) throw DataError("cause '" + ae.node + "': window has missing values");
    const Matrix scaled = data::scale_apply(ae.scaler, w.values, data::mask_of(w.values));
    Matrix feats(node::kFeatureLength, n);
    for (Index k = 0; k < n; ++k) feats.col(k) = node::featurize_scaled(scaled.col(k), w.months[static_cast<std::size_t>(k)]);
    latents.push_back(ae.encode_expanded(ae.expand(feats)));
  }
  RelationOutput out;
  out.latent = model.relation.net.forward(gather_input(latents, n, 1)).col(0);
  out.decoded = model.effect.decode_node(out.latent);
  return out;
}

int StackState::count(const std::string& effect) const {
  const auto it = components.find(effect);
  return it == components.end() ? 0 : static_cast<int>(it->second.size());
}

bool StackState::contains(const std::string& relation_id) const {
  for (const auto& [effect, list] : components)
    for (const auto& c : list)
      if (c.relation_id == relation_id) return true;
  return false;
}

int estimate_rank(const Matrix& values) {
  if (values.size() == 0) return 0;
  Eigen::ColPivHouseholderQR<Matrix> qr(values.transpose());
  qr.setThreshold(1e-9);
  return static_cast<int>(qr.rank());
}

StackResult stack_component(StackState& state, const std::string& effect, const std::string& id, int latent_dim,
                            int data_rank) {
  const auto [causes, target] = parse_relation_id(id);
  if (target != effect) throw RegistryError("relation '" + id + "' does not end at node '" + effect + "'");
  if (state.contains(id)) throw RegistryError("relation '" + id + "' is already registered");
  auto& list = state.components[effect];
  StackResult r;
  r.component = {id, static_cast<int>(list.size()) + 1};
  list.push_back(r.component);
  const int T = static_cast<int>(list.size());
  if (!(latent_dim > data_rank + T)) {
    r.bound_ok = false;
    r.warning = "node '" + effect + "': latent dimension " + std::to_string(latent_dim) + " does not exceed rank " +
                std::to_string(data_rank) + " + " + std::to_string(T) + " components";
  }
  return r;
}

RouteResult route(const RoutingSpec& spec, const Registry& registry, const StackState& stack, const NodeBank& bank,
                  const std::vector<Index>& times, const std::vector<Matrix>* first_latents) {
  if (spec.path.empty()) throw RoutingError("empty routing path");
  std::vector<const MicroCausalModel*> chain;
  for (const auto& id : spec.path) {
    const auto it = registry.find(id);
    if (it == registry.end() || !it->second || !stack.contains(id))
      throw RoutingError("relation '" + id + "' is not registered");
    chain.push_back(it->second);
  }
  for (std::size_t k = 1; k < chain.size(); ++k) {
    const auto& prev = chain[k - 1]->relation.effect;
    const auto& causes = chain[k]->relation.causes;
    if (std::find(causes.begin(), causes.end(), prev) == causes.end())
      throw RoutingError("path breaks between '" + spec.path[k - 1] + "' and '" + spec.path[k] + "'");
  }
  if (spec.input == RouteInput::cause_latent &&
      (!first_latents || first_latents->size() != chain.front()->causes.size()))
    throw RoutingError("cause-latent input needs one latent series per cause of '" + spec.path.front() + "'");

  const auto B = static_cast<Index>(times.size());
  Matrix current;  // latent of the previous hop's effect at each final time
  for (std::size_t k = 0; k < chain.size(); ++k) {
    const MicroCausalModel& m = *chain[k];
    const int n = m.relation.window_n;
    const Index L = m.relation.latent_dim;
    Matrix x(m.relation.input_dim(), B);
    for (std::size_t c = 0; c < m.causes.size(); ++c) {
      const bool hop = k > 0 && m.relation.causes[c] == chain[k - 1]->relation.effect;
      Matrix encoded;
      if (!hop && !(k == 0 && spec.input == RouteInput::cause_latent)) {
        const auto& ae = m.causes[c];
        const Matrix& feats = bank.tensor(ae.node).features;
        encoded.resize(L, feats.cols());
        for (Index b = 0; b < feats.cols(); b += kEvalChunk) {
          const Index len = std::min(kEvalChunk, feats.cols() - b);
          encoded.middleCols(b, len) = ae.encode_expanded(ae.expand(feats.middleCols(b, len)));
        }
      }
      for (Index j = 0; j < B; ++j) {
        const Index t = times[static_cast<std::size_t>(j)];
        if (t < n - 1) throw DataError("time " + std::to_string(t) + " lacks a full cause window");
        for (Index s = 0; s < n; ++s) {
          auto block = x.block((static_cast<Index>(c) * n + s) * L, j, L, 1);
          if (hop) {
            block = current.col(j);
          } else if (k == 0 && spec.input == RouteInput::cause_latent) {
            block = (*first_latents)[c].col(t - n + 1 + s);
          } else {
            block = encoded.col(t - n + 1 + s);
          }
        }
      }
    }
    current = m.relation.net.forward(x);
  }

  const MicroCausalModel& last = *chain.back();
  const node::NodeAutoencoder& decoder =
      spec.output == RouteOutput::relation_latent ? last.effect : bank.model(last.relation.effect);
  node::DecoderPass pass;
  decoder.decode(current, pass);
  const Matrix pred = node::defeaturize(pass.recon, decoder.dim);
  const Matrix gate = (pass.mask_prob.array() > node::kMaskThreshold).cast<double>();
  RouteResult r;
  r.latent = current;
  r.scaled = pred.cwiseProduct(gate);
  r.values = data::scale_invert(decoder.scaler, pred, gate);
  r.mask_prob = pass.mask_prob;
  return r;
}

}  // namespace rirl::relation
