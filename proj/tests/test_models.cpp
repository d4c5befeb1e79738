#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <functional>
#include <vector>

#include "toilcast/autodiff.hpp"
#include "toilcast/errors.hpp"
#include "toilcast/models.hpp"

using namespace toilcast;
using namespace toilcast::models;
using nn::Tensor;

namespace {

ModelInput random_input(std::size_t B, std::size_t L, std::size_t H, std::size_t nt, std::size_t nc,
                        std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ModelInput in;
  in.inputs = Tensor({B, L, nt + nc});
  in.future_covariates = Tensor({B, H, nc});
  for (double& v : in.inputs.data) v = u(rng);
  for (double& v : in.future_covariates.data) v = u(rng);
  return in;
}

Model initialized(const ModelConfig& cfg, std::uint64_t seed = 3) {
  Model m(cfg);
  nn::init_params(m.params(), seed);
  return m;
}

double model_gradient_error(Model& m, const ModelInput& in) {
  const Tensor target(nn::Shape{in.batch(), m.output_size()}, 0.3);
  auto loss = [&] {
    nn::Tape t;
    auto out = m.forward(t, in);
    return t.value(nn::mse_loss(t, out, target)).item();
  };
  m.params().zero_grad();
  {
    nn::Tape t;
    t.backward(nn::mse_loss(t, m.forward(t, in), target));
  }
  double worst = 0.0;
  const double h = 1e-6;
  for (auto& p : m.params()) {
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double keep = p.value.data[i];
      p.value.data[i] = keep + h;
      const double up = loss();
      p.value.data[i] = keep - h;
      const double dn = loss();
      p.value.data[i] = keep;
      const double fd = (up - dn) / (2 * h);
      worst = std::max(worst, std::abs(fd - p.grad.data[i]) / std::max(1.0, std::abs(fd) + std::abs(p.grad.data[i])));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("mlp") {
  MlpConfig cfg;
  cfg.n_layers = 2;
  cfg.n_neurons = 6;
  cfg.lookback = 4;
  Model m(cfg);
  for (auto& p : m.params()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  m.params()[m.params().index_of("mlp.out.b")].value.data = {1.75};
  auto y = m.predict(random_input(3, 4, 1, 1, 2, 1));
  CHECK(y == std::vector<double>{1.75, 1.75, 1.75});

  MlpConfig big;
  big.n_layers = 8;
  big.n_neurons = 128;
  big.lookback = 48;
  Model bm = initialized(big);
  auto out = bm.predict(random_input(2, 48, 1, 1, 2, 2));
  CHECK(out.size() == 2);
  for (double v : out) CHECK(std::isfinite(v));

  MlpConfig q = cfg;
  q.quantiles = QuantileHead::pi98();
  CHECK(Model(q).output_size() == 3);
  q.n_targets = 2;
  CHECK(Model(q).output_size() == 6);

  Model small = initialized(cfg);
  CHECK_THROWS_AS(small.predict(random_input(1, 5, 1, 1, 2, 3)), ValidationError);
}

TEST_CASE("tcn receptive field") {
  const std::vector<std::size_t> five{1, 2, 4, 8, 16}, one{1}, two{1, 2};
  CHECK(receptive_field(2, five) == 63);
  CHECK(receptive_field(2, one) == 3);
  CHECK(receptive_field(1, five) == 1);
  CHECK(receptive_field(4, two) == 19);
  TcnConfig cfg;
  cfg.lookback = 48;
  CHECK(tcn_block_count(cfg) == 5);
  CHECK(receptive_field(cfg) == 63);
  cfg.n_blocks = 2;
  CHECK_THROWS_AS(Tcn{cfg}, ValidationError);
  cfg.kernel = 1;
  cfg.n_blocks = 0;
  CHECK_THROWS_AS(Tcn{cfg}, ValidationError);
}

TEST_CASE("tcn covers the look-back and is causal") {
  TcnConfig cfg;
  cfg.kernel = 2;
  cfg.n_filters = 16;
  cfg.lookback = 48;
  Model m = initialized(cfg);
  auto in = random_input(1, 48, 1, 1, 2, 4);
  const double base = m.predict(in)[0];
  auto moved = in;
  moved.inputs.data[0] += 1.0;
  moved.inputs.data[1] += 1.0;
  CHECK(m.predict(moved)[0] != base);

  auto& tcn = std::get<Tcn>(m.impl());
  auto seq = [&](const ModelInput& x) {
    nn::Tape t;
    return t.value(tcn.forward_sequence(t, x));
  };
  const Tensor ref = seq(in);
  for (std::size_t s : {5u, 20u, 47u}) {
    auto p = in;
    for (std::size_t c = 0; c < 3; ++c) p.inputs.data[s * 3 + c] += 0.5;
    const Tensor out = seq(p);
    for (std::size_t t = 0; t < s; ++t) CHECK(out.data[t] == ref.data[t]);
    CHECK(out.data[s] != ref.data[s]);
  }
}

TEST_CASE("tide shapes and residual isolation") {
  TideConfig cfg;
  cfg.lookback = 48;
  cfg.temporal_width = 4;
  cfg.decoder_output_dim = 8;
  cfg.temporal_decoder_hidden = 8;
  Model m = initialized(cfg);
  auto& tide = std::get<Tide>(m.impl());
  CHECK(tide.decoder_output_size() == 8);
  CHECK(m.output_size() == 1);
  auto in = random_input(4, 48, 1, 1, 2, 5);
  CHECK(m.predict(in).size() == 4);

  const auto keep = tide.global_residual_params();
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    if (std::find(keep.begin(), keep.end(), i) != keep.end()) continue;
    auto& d = m.params()[i].value.data;
    std::fill(d.begin(), d.end(), 0.0);
  }
  const auto& w = m.params()[keep[0]].value;
  const double b = m.params()[keep[1]].value.data[0];
  auto y = m.predict(in);
  for (std::size_t r = 0; r < 4; ++r) {
    double lin = b;
    for (std::size_t l = 0; l < 48; ++l) lin += w.data[l] * in.inputs.data[(r * 48 + l) * 3];
    CHECK(std::abs(y[r] - lin) <= 1e-12);
  }

  TideConfig multi = cfg;
  multi.horizon = 3;
  multi.n_targets = 2;
  multi.quantiles = QuantileHead::pi98();
  Model mm = initialized(multi);
  CHECK(mm.output_size() == 18);
  CHECK(mm.predict(random_input(2, 48, 3, 2, 2, 6)).size() == 36);
  CHECK_THROWS_AS(mm.predict(random_input(2, 48, 2, 2, 2, 6)), ValidationError);
}

TEST_CASE("all families differentiate cleanly") {
  SUBCASE("mlp") {
    MlpConfig c;
    c.n_layers = 2;
    c.n_neurons = 5;
    c.lookback = 4;
    c.activation = nn::Activation::tanh;
    c.quantiles = QuantileHead::pi98();
    Model m = initialized(c);
    CHECK(model_gradient_error(m, random_input(3, 4, 1, 1, 2, 7)) < 1e-4);
  }
  SUBCASE("tcn") {
    TcnConfig c;
    c.n_filters = 3;
    c.lookback = 6;
    c.activation = nn::Activation::tanh;
    c.weight_norm = true;
    Model m = initialized(c);
    CHECK(model_gradient_error(m, random_input(2, 6, 1, 1, 2, 8)) < 1e-4);
  }
  SUBCASE("tide") {
    TideConfig c;
    c.lookback = 6;
    c.hidden_size = 5;
    c.decoder_output_dim = 3;
    c.temporal_decoder_hidden = 4;
    c.horizon = 2;
    c.layer_norm = true;
    Model m = initialized(c);
    CHECK(model_gradient_error(m, random_input(2, 6, 2, 1, 2, 9)) < 1e-4);
  }
}

TEST_CASE("non-crossing quantiles") {
  const std::vector<double> sorted{40, 45, 50}, crossed{45, 40, 50}, flat{42, 42, 42};
  CHECK(enforce_non_crossing(sorted, 3) == sorted);
  CHECK(enforce_non_crossing(crossed, 3) == sorted);
  CHECK(enforce_non_crossing(flat, 3) == flat);
  const std::vector<double> two{3, 1, 2, 9, 8, 7};
  auto once = enforce_non_crossing(two, 3);
  CHECK(once == std::vector<double>{1, 2, 3, 7, 8, 9});
  CHECK(enforce_non_crossing(once, 3) == once);
}

TEST_CASE("quantile head validation") {
  CHECK_NOTHROW(QuantileHead::pi98().validate());
  CHECK(QuantileHead::pi98().median_index() == 1u);
  CHECK_THROWS_AS((QuantileHead{{0.5, 0.1}}).validate(), ValidationError);
  CHECK_THROWS_AS((QuantileHead{{0.0, 0.5}}).validate(), ValidationError);
  CHECK_THROWS_AS((QuantileHead{{0.5, 1.0}}).validate(), ValidationError);
}

TEST_CASE("config json round trip") {
  TcnConfig t;
  t.kernel = 4;
  t.n_filters = 8;
  t.dropout = 0.1;
  t.quantiles = QuantileHead::pi98();
  auto j = config_to_json(t);
  auto back = std::get<TcnConfig>(config_from_json(Family::tcn, j));
  CHECK(back.kernel == 4);
  CHECK(back.n_filters == 8);
  CHECK(back.dropout == 0.1);
  CHECK(back.quantiles.alphas == t.quantiles.alphas);
  CHECK(config_to_json(back) == j);

  TideConfig d;
  d.decoder_output_dim = 2;
  CHECK(config_to_json(config_from_json(Family::tide, config_to_json(d))) == config_to_json(d));
  CHECK(family_from_name("ann") == Family::ann);
  CHECK_THROWS_AS(family_from_name("lstm"), ValidationError);
  CHECK_THROWS_AS(config_from_json(Family::ann, nlohmann::json{{"n_layers", "many"}}), ValidationError);
}
