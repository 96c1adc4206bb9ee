#include <doctest.h>

#include <cmath>

#include "rirl/error.hpp"
#include "rirl/gaussian.hpp"
#include "rirl/metrics.hpp"
#include "rirl/relation.hpp"
#include "unit/support.hpp"

using namespace rirl;
using namespace rirl::relation;

namespace {

node::AutoencoderConfig ae_config() {
  node::AutoencoderConfig c;
  c.num_keys = 1;
  c.hidden = 32;
  c.latent_dim = 8;
  c.epochs = 15;
  c.seed = 3;
  return c;
}

EdgeTrainConfig edge_config(int n = 3, int epochs = 8) {
  EdgeTrainConfig c;
  c.window_n = n;
  c.hidden = 32;
  c.epochs = epochs;
  c.lr = 3e-3;
  c.seed = 5;
  return c;
}

NodeBank bank_for(const data::Dataset& d) {
  std::map<std::string, node::NodeAutoencoder> models;
  for (const auto& s : d.nodes) models.emplace(s.name, node::train_node_autoencoder(s, ae_config()).model);
  return NodeBank::build(d, std::move(models));
}

// A -> B -> C with strong gains, plus an unrelated D.
const data::Dataset& chain_data() {
  static const data::Dataset d = [] {
    data::DagSpec spec = test_support::chain_spec(2);
    spec.nodes.push_back({"D", 1, 1.0, 1.0});
    return data::synth_generate(spec, 1200, 11).data;
  }();
  return d;
}

const NodeBank& chain_bank() {
  static const NodeBank b = bank_for(chain_data());
  return b;
}

CauseWindow window_of(const data::NodeSeries& s, Index end, int n) {
  CauseWindow w;
  w.values = s.values.middleCols(end - n + 1, n);
  for (Index t = end - n + 1; t <= end; ++t) w.months.push_back(s.month[static_cast<std::size_t>(t)]);
  return w;
}

}  // namespace

TEST_CASE("relation ids") {
  CHECK(relation_id({"B", "C"}, "D") == "B,C->D");
  const auto [causes, effect] = parse_relation_id("B,C->D");
  CHECK(causes == std::vector<std::string>{"B", "C"});
  CHECK(effect == "D");
  CHECK_THROWS_AS(parse_relation_id("B,C"), ConfigError);
  CHECK_THROWS_AS(parse_relation_id("B,,C->D"), ConfigError);
}

TEST_CASE("composite input length is the sum of single-cause lengths") {
  const auto bc = RelationModel::create({"B", "C"}, "D", 10, 16, 128, 1);
  const auto b = RelationModel::create({"B"}, "D", 10, 16, 128, 1);
  const auto c = RelationModel::create({"C"}, "D", 10, 16, 128, 1);
  CHECK(bc.input_dim() == 2 * 10 * 16);
  CHECK(bc.net.in_dim() == b.input_dim() + c.input_dim());
  CHECK(bc.net.out_dim() == 16);
  CHECK(bc.id() == "B,C->D");
}

TEST_CASE("relation bridge gradients match central differences") {
  // two cause encoders -> relation -> effect decoder, loss = recon + lambda * KLD
  node::AutoencoderConfig ac;
  ac.seed = 9;
  const data::Scaler sc{{0.0, 0.0}, {1.0, 1.0}};
  auto cb = node::NodeAutoencoder::create("B", 2, sc, ac);
  auto cc = node::NodeAutoencoder::create("C", 2, sc, ac);
  auto ef = node::NodeAutoencoder::create("D", 2, sc, ac);
  const int n = 2;
  const Index batch = 4;
  const Index L = ac.latent_dim;
  auto rel = RelationModel::create({"B", "C"}, "D", n, static_cast<int>(L), 128, 2);

  Rng rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  auto feats = [&](Index cols) {
    Matrix f(24, cols);
    for (Index c = 0; c < cols; ++c) {
      Vector x(2);
      x << z(rng), z(rng);
      f.col(c) = node::featurize_scaled(x, static_cast<int>(c % 12) + 1);
    }
    return f;
  };
  const Matrix xb = feats(batch + n - 1);
  const Matrix xc = feats(batch + n - 1);
  const Matrix y = feats(batch);
  const Matrix ymask = Matrix::Ones(2, batch);
  const auto target = explore::gaussian_stats(ef.encode_expanded(ef.expand(y)));
  const double lambda = 0.1;

  auto assemble = [&](const std::vector<Matrix>& lat) {
    Matrix in(rel.input_dim(), batch);
    for (std::size_t c = 0; c < lat.size(); ++c)
      for (Index j = 0; j < batch; ++j)
        for (Index k = 0; k < n; ++k) in.block((static_cast<Index>(c) * n + k) * L, j, L, 1) = lat[c].col(j + k);
    return in;
  };
  auto loss = [&] {
    const Matrix v_hat = rel.net.forward(assemble({cb.encode_expanded(cb.expand(xb)), cc.encode_expanded(cc.expand(xc))}));
    node::DecoderPass pass;
    ef.decode(v_hat, pass);
    return node::reconstruction_loss(pass, y, ymask, 1.0).report.total +
           lambda * explore::gaussian_kld(explore::gaussian_stats(v_hat), target);
  };
  auto analytic = [&] {
    cb.zero_grad();
    cc.zero_grad();
    ef.zero_grad();
    rel.net.zero_grad();
    nn::MlpTrace tb, tc, tr;
    const Matrix lb = cb.encode_expanded(cb.expand(xb), tb);
    const Matrix lc = cc.encode_expanded(cc.expand(xc), tc);
    const Matrix v_hat = rel.net.forward(assemble({lb, lc}), tr);
    node::DecoderPass pass;
    ef.decode(v_hat, pass);
    const auto r = node::reconstruction_loss(pass, y, ymask, 1.0);
    Matrix g = ef.decode_backward(pass, r.grad_recon, r.grad_mask_logit);
    g += lambda * explore::gaussian_kld_grad(v_hat, target);
    const Matrix gx = rel.net.backward(tr, g);
    Matrix gb = Matrix::Zero(L, batch + n - 1);
    Matrix gc = Matrix::Zero(L, batch + n - 1);
    for (Index j = 0; j < batch; ++j)
      for (Index k = 0; k < n; ++k) {
        gb.col(j + k) += gx.block(k * L, j, L, 1);
        gc.col(j + k) += gx.block((n + k) * L, j, L, 1);
      }
    cb.encoder.backward(tb, gb);
    cc.encoder.backward(tc, gc);
  };
  nn::ParamList params;
  cb.encoder_params(params);
  cc.encoder_params(params);
  rel.net.collect(params);
  ef.decoder_params(params);
  const auto r = nn::grad_check(params, loss, analytic, 1e-5, 40, 4);
  CAPTURE(r.worst_param);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("training contract errors") {
  const auto& bank = chain_bank();
  EdgeTrainConfig bad = edge_config();
  bad.window_m = 2;
  CHECK_THROWS_AS(train_micro_causal({"A"}, "B", bank, bad), ConfigError);
  CHECK_THROWS_AS(train_micro_causal({"B"}, "B", bank, edge_config()), ConfigError);
  CHECK_THROWS_AS(train_micro_causal({"Q"}, "B", bank, edge_config()), ConfigError);

  data::DagSpec spec = test_support::chain_spec(1);
  const auto tiny = data::synth_generate(spec, 70, 2).data;
  std::map<std::string, node::NodeAutoencoder> untrained;
  for (const auto& s : tiny.nodes)
    untrained.emplace(s.name, node::NodeAutoencoder::create(s.name, 1, s.scaler, ae_config()));
  const auto tiny_bank = NodeBank::build(tiny, std::move(untrained));
  EdgeTrainConfig c = edge_config(10, 1);
  CHECK_THROWS_AS(train_micro_causal({"A"}, "B", tiny_bank, c), TrainingError);
}

TEST_CASE("single-cause model emits metrics and relation outputs") {
  const auto& bank = chain_bank();
  const auto m = train_micro_causal({"A"}, "B", bank, edge_config());
  CHECK(m.id() == "A->B");
  CHECK(m.metrics.kld >= 0.0);
  CHECK(std::isfinite(m.metrics.rmse_scaled));
  CHECK(std::isfinite(m.metrics.rmse_unscaled));
  CHECK(std::isfinite(m.metrics.mask_bce));
  CHECK(m.train_loss_history.size() == 8);

  const auto& a = chain_data().node("A");
  const std::vector<CauseWindow> w{window_of(a, 500, 3)};
  const auto first = relation_forward(m, w);
  const auto second = relation_forward(m, w);
  CHECK(first.latent.size() == 8);
  CHECK(first.latent == second.latent);
  CHECK(first.decoded.values == second.decoded.values);

  const Matrix batch = predict_latents(m, {&bank.tensor("A")}, {500});
  CHECK((batch.col(0) - first.latent).cwiseAbs().maxCoeff() <= 1e-12);

  CauseWindow short_window = window_of(a, 500, 2);
  CHECK_THROWS_AS(relation_forward(m, {short_window}), DataError);
  CHECK_THROWS_AS(predict_latents(m, {&bank.tensor("A")}, {1}), DataError);
}

TEST_CASE("eval folds are averaged") {
  const auto& bank = chain_bank();
  EdgeTrainConfig c = edge_config(3, 2);
  c.eval_folds = 2;
  const auto m = train_micro_causal({"A"}, "B", bank, c);
  CHECK(m.metrics.kld >= 0.0);
  c.eval_folds = 4;
  CHECK_THROWS_AS(train_micro_causal({"A"}, "B", bank, c), ConfigError);
}

TEST_CASE("copying a node through a one-step window stays close to its own reconstruction") {
  data::Dataset d = chain_data();
  data::NodeSeries copy = d.node("A");
  copy.name = "Acopy";
  d.nodes.push_back(copy);
  std::map<std::string, node::NodeAutoencoder> models{{"A", chain_bank().model("A")}};
  models.emplace("Acopy", node::train_node_autoencoder(copy, ae_config()).model);
  data::Dataset pair;
  pair.dates = d.dates;
  pair.nodes = {d.node("A"), copy};
  const auto bank = NodeBank::build(pair, models);
  EdgeTrainConfig c = edge_config(1, 25);
  c.lambda_kld = 0.0;
  const auto m = train_micro_causal({"A"}, "Acopy", bank, c);
  CAPTURE(m.metrics.rmse_scaled);
  CAPTURE(m.metrics.self_rmse_scaled);
  CHECK(m.metrics.rmse_scaled <= 2.0 * m.metrics.self_rmse_scaled);
}

TEST_CASE("stacking registry") {
  StackState s;
  auto r1 = stack_component(s, "Y", "X->Y", 16, 3);
  CHECK(r1.component.tau == 1);
  CHECK(s.count("Y") == 1);
  CHECK(r1.bound_ok);
  auto r2 = stack_component(s, "Y", "Z->Y", 16, 3);
  CHECK(r2.component.tau == 2);
  CHECK(s.count("Y") == 2);
  stack_component(s, "Z", "Y->Z", 16, 3);
  CHECK(s.count("Y") == 2);
  CHECK(s.count("Z") == 1);
  CHECK_THROWS_AS(stack_component(s, "Y", "X->Y", 16, 3), RegistryError);
  CHECK_THROWS_AS(stack_component(s, "Y", "X->Q", 16, 3), RegistryError);
  CHECK(s.components.at("Y")[0].relation_id == "X->Y");
  CHECK(s.components.at("Y")[1].relation_id == "Z->Y");

  StackState tight;
  const auto w = stack_component(tight, "N", "M->N", 4, 3);
  CHECK_FALSE(w.bound_ok);
  CHECK(!w.warning.empty());
}

TEST_CASE("rank estimate") {
  Matrix m(3, 50);
  for (Index t = 0; t < 50; ++t) {
    m(0, t) = std::sin(0.1 * t);
    m(1, t) = std::cos(0.3 * t);
    m(2, t) = 2.0 * m(0, t) - m(1, t);
  }
  CHECK(estimate_rank(m) == 2);
}

TEST_CASE("routing") {
  const auto& bank = chain_bank();
  // no latent-distribution term, so both hops are trained for prediction alone
  EdgeTrainConfig hop = edge_config(3, 10);
  hop.lambda_kld = 0.0;
  const auto ab = train_micro_causal({"A"}, "B", bank, hop);
  const auto bc = train_micro_causal({"B"}, "C", bank, hop);
  const auto dc = train_micro_causal({"D"}, "C", bank, edge_config(3, 2));
  StackState stack;
  stack_component(stack, "B", ab.id(), 8, 2);
  stack_component(stack, "C", bc.id(), 8, 2);
  Registry reg{{ab.id(), &ab}, {bc.id(), &bc}, {dc.id(), &dc}};

  std::vector<Index> times;
  for (Index t = 900; t < 1200; ++t) times.push_back(t);

  SUBCASE("single hop equals the relation itself") {
    const auto r = route({RouteInput::raw_node, RouteOutput::relation_latent, {ab.id()}}, reg, stack, bank, times);
    const Matrix direct = predict_latents(ab, {&bank.tensor("A")}, times);
    CHECK((r.latent - direct).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("two hops beat the mean predictor") {
    const auto r =
        route({RouteInput::raw_node, RouteOutput::relation_latent, {ab.id(), bc.id()}}, reg, stack, bank, times);
    const auto& truth = bank.tensor("C").values;
    double nse = 0.0;
    for (Index a = 0; a < truth.rows(); ++a)
      nse += metrics::nse(r.values.row(a).transpose(), truth(a, times).transpose());
    nse /= static_cast<double>(truth.rows());
    CAPTURE(nse);
    CHECK(nse > 0.0);
  }
  SUBCASE("cause-latent input matches raw input when fed the same latents") {
    const auto& ae = ab.causes[0];
    const Matrix lat = ae.encode_expanded(ae.expand(bank.tensor("A").features));
    const std::vector<Matrix> first{lat};
    const auto a = route({RouteInput::cause_latent, RouteOutput::own_latent, {ab.id()}}, reg, stack, bank, times, &first);
    const auto b = route({RouteInput::raw_node, RouteOutput::own_latent, {ab.id()}}, reg, stack, bank, times);
    CHECK((a.latent - b.latent).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(route({RouteInput::raw_node, RouteOutput::relation_latent, {dc.id()}}, reg, stack, bank, times),
                    RoutingError);
    CHECK_THROWS_AS(route({RouteInput::raw_node, RouteOutput::relation_latent, {bc.id(), ab.id()}}, reg, stack, bank,
                          times),
                    RoutingError);
    CHECK_THROWS_AS(route({RouteInput::raw_node, RouteOutput::relation_latent, {}}, reg, stack, bank, times),
                    RoutingError);
    CHECK_THROWS_AS(route({RouteInput::cause_latent, RouteOutput::relation_latent, {ab.id()}}, reg, stack, bank, times),
                    RoutingError);
  }
}
