#include "toilcast/models.hpp"

#include <algorithm>
#include <cmath>

#include "toilcast/errors.hpp"

namespace toilcast::models {

using nn::ParameterSet;
using nn::Tape;
using nn::Tensor;
using nn::Var;

void QuantileHead::validate() const {
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0 && alphas[i] < 1.0)) {
      throw ValidationError("quantile level " + std::to_string(alphas[i]) + " is outside (0, 1)");
    }
    if (i > 0 && !(alphas[i] > alphas[i - 1])) throw ValidationError("quantile levels must be strictly increasing");
  }
}

std::optional<std::size_t> QuantileHead::median_index() const {
  for (std::size_t i = 0; i < alphas.size(); ++i)
    if (alphas[i] == 0.5) return i;
  return std::nullopt;
}

std::string family_name(Family f) {
  switch (f) {
    case Family::ann: return "ann";
    case Family::tcn: return "tcn";
    case Family::tide: return "tide";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  if (name == "ann" || name == "mlp") return Family::ann;
  if (name == "tcn") return Family::tcn;
  if (name == "tide") return Family::tide;
  throw ValidationError("unknown model family '" + name + "' (expected ann, tcn or tide)");
}

std::size_t receptive_field(std::size_t kernel, std::span<const std::size_t> dilations,
                            std::size_t convs_per_block) {
  std::size_t sum = 0;
  for (std::size_t d : dilations) sum += d;
  return 1 + (kernel - 1) * convs_per_block * sum;
}

namespace {

std::vector<std::size_t> dilations_for(const TcnConfig& cfg, std::size_t blocks) {
  std::vector<std::size_t> d;
  std::size_t current = 1;
  for (std::size_t i = 0; i < blocks; ++i) {
    d.push_back(current);
    current *= cfg.dilation_base;
  }
  return d;
}

void check_input(const char* model, const ModelInput& in, std::size_t lookback, std::size_t channels) {
  const Tensor& x = in.inputs;
  if (x.rank() != 3 || x.dim(1) != lookback || x.dim(2) != channels || x.dim(0) == 0) {
    throw ValidationError(std::string("shape mismatch at ") + model + " input: expected [B, " +
                          std::to_string(lookback) + ", " + std::to_string(channels) + "], got " +
                          nn::shape_string(x.shape));
  }
}

}  // namespace

std::size_t tcn_block_count(const TcnConfig& cfg) {
  if (cfg.n_blocks > 0) return cfg.n_blocks;
  if (cfg.kernel < 2) return 1;
  std::size_t blocks = 1;
  while (receptive_field(cfg.kernel, dilations_for(cfg, blocks)) < cfg.lookback) ++blocks;
  return blocks;
}

std::size_t receptive_field(const TcnConfig& cfg) {
  return receptive_field(cfg.kernel, dilations_for(cfg, tcn_block_count(cfg)));
}

// ---------------------------------------------------------------------------
// Layers

DenseLayer DenseLayer::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                              Activation act) {
  if (in == 0 || out == 0) throw ValidationError("dense layer '" + name + "' has a zero dimension");
  DenseLayer l;
  l.weight = ps.add(name + ".w", {out, in}, in);
  l.bias = ps.add(name + ".b", {out}, 0);
  l.activation = act;
  return l;
}

Var DenseLayer::forward(Tape& t, ParameterSet& ps, Var x) const {
  Var y = nn::affine(t, x, t.parameter(ps, weight), t.parameter(ps, bias));
  return activation == Activation::identity ? y : nn::activate(t, y, activation);
}

ResidualBlock ResidualBlock::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden,
                                    std::size_t out, double dropout, bool layer_norm) {
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must lie in [0, 1)");
  ResidualBlock r;
  r.dropout = dropout;
  r.hidden = DenseLayer::create(ps, name + ".hidden", in, hidden, Activation::relu);
  r.out = DenseLayer::create(ps, name + ".out", hidden, out, Activation::identity);
  r.skip = DenseLayer::create(ps, name + ".skip", in, out, Activation::identity);
  if (layer_norm) {
    r.norm_gain = ps.add(name + ".norm.gain", {out}, 0, 1.0);
    r.norm_bias = ps.add(name + ".norm.bias", {out}, 0);
  }
  return r;
}

Var ResidualBlock::forward(Tape& t, ParameterSet& ps, Var x, Rng* rng) const {
  Var h = out.forward(t, ps, hidden.forward(t, ps, x));
  if (rng && dropout > 0.0) h = nn::dropout(t, h, dropout, *rng);
  Var y = nn::add(t, h, skip.forward(t, ps, x));
  if (norm_gain) y = nn::layer_norm(t, y, t.parameter(ps, *norm_gain), t.parameter(ps, *norm_bias));
  return y;
}

CausalConvLayer CausalConvLayer::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                                        std::size_t kernel, std::size_t dilation, bool weight_norm) {
  if (kernel == 0 || dilation == 0) throw ValidationError("conv layer '" + name + "' needs kernel, dilation >= 1");
  CausalConvLayer l;
  l.weight = ps.add(name + ".w", {kernel, out, in}, kernel * in);
  l.bias = ps.add(name + ".b", {out}, 0);
  l.dilation = dilation;
  // Magnitude starts near the expected row norm of the direction's init.
  if (weight_norm) l.magnitude = ps.add(name + ".g", {out}, 0, std::sqrt(2.0));
  return l;
}

Var CausalConvLayer::forward(Tape& t, ParameterSet& ps, Var x) const {
  Var w = t.parameter(ps, weight);
  if (magnitude) w = nn::weight_norm(t, w, t.parameter(ps, *magnitude));
  return nn::causal_conv1d(t, x, w, t.parameter(ps, bias), dilation);
}

// ---------------------------------------------------------------------------
// MLP

Mlp::Mlp(MlpConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.quantiles.validate();
  if (cfg_.n_layers == 0 || cfg_.n_neurons == 0 || cfg_.lookback == 0 || cfg_.n_targets == 0) {
    throw ValidationError("MLP layers, neurons, look-back and targets must be positive");
  }
  std::size_t width = cfg_.lookback * (cfg_.n_targets + cfg_.n_covariates);
  for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
    layers_.push_back(
        DenseLayer::create(params_, "mlp.hidden" + std::to_string(i), width, cfg_.n_neurons, cfg_.activation));
    width = cfg_.n_neurons;
  }
  layers_.push_back(DenseLayer::create(params_, "mlp.out", width, cfg_.n_targets * cfg_.quantiles.slots(),
                                       Activation::identity));
}

Var Mlp::forward(Tape& t, const ModelInput& in) {
  const std::size_t C = cfg_.n_targets + cfg_.n_covariates;
  check_input("mlp", in, cfg_.lookback, C);
  const std::size_t B = in.batch();
  Var x = t.constant(Tensor({B, cfg_.lookback * C}, in.inputs.data), "mlp.input");
  for (const DenseLayer& l : layers_) x = l.forward(t, params_, x);
  return x;
}

// ---------------------------------------------------------------------------
// TCN

Tcn::Tcn(TcnConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.quantiles.validate();
  if (cfg_.kernel == 0 || cfg_.n_filters == 0 || cfg_.lookback == 0 || cfg_.n_targets == 0 ||
      cfg_.dilation_base == 0) {
    throw ValidationError("TCN kernel, filters, dilation base, look-back and targets must be positive");
  }
  if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0) throw ValidationError("TCN dropout must lie in [0, 1)");
  const std::size_t rf = receptive_field(cfg_);
  if (rf < cfg_.lookback) {
    throw ValidationError("TCN receptive field " + std::to_string(rf) + " is shorter than the look-back " +
                          std::to_string(cfg_.lookback));
  }
  const std::size_t blocks = tcn_block_count(cfg_);
  std::size_t channels = cfg_.n_targets + cfg_.n_covariates;
  std::size_t dilation = 1;
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::string name = "tcn.block" + std::to_string(i);
    const bool wn = cfg_.weight_norm;
    Block b{CausalConvLayer::create(params_, name + ".conv1", channels, cfg_.n_filters, cfg_.kernel, dilation, wn),
            CausalConvLayer::create(params_, name + ".conv2", cfg_.n_filters, cfg_.n_filters, cfg_.kernel, dilation, wn),
            std::nullopt};
    if (channels != cfg_.n_filters) {
      b.downsample = CausalConvLayer::create(params_, name + ".skip", channels, cfg_.n_filters, 1, 1);
    }
    blocks_.push_back(std::move(b));
    channels = cfg_.n_filters;
    dilation *= cfg_.dilation_base;
  }
  head_ = DenseLayer::create(params_, "tcn.head", cfg_.n_filters, cfg_.n_targets * cfg_.quantiles.slots(),
                             Activation::identity);
}

Var Tcn::forward_sequence(Tape& t, const ModelInput& in) {
  check_input("tcn", in, cfg_.lookback, cfg_.n_targets + cfg_.n_covariates);
  const std::size_t B = in.batch();
  const std::size_t T = cfg_.lookback;
  Var x = t.constant(in.inputs, "tcn.input");
  for (const Block& b : blocks_) {
    Var h = nn::activate(t, b.conv1.forward(t, params_, x), cfg_.activation);
    if (in.dropout_rng && cfg_.dropout > 0.0) h = nn::dropout(t, h, cfg_.dropout, *in.dropout_rng);
    h = b.conv2.forward(t, params_, h);
    if (in.dropout_rng && cfg_.dropout > 0.0) h = nn::dropout(t, h, cfg_.dropout, *in.dropout_rng);
    Var skip = b.downsample ? b.downsample->forward(t, params_, x) : x;
    x = nn::add(t, h, skip);
  }
  Var flat = nn::reshape(t, x, {B * T, cfg_.n_filters});
  Var out = head_.forward(t, params_, flat);
  return nn::reshape(t, out, {B, T, cfg_.n_targets * cfg_.quantiles.slots()});
}

Var Tcn::forward(Tape& t, const ModelInput& in) { return nn::last_step(t, forward_sequence(t, in)); }

// ---------------------------------------------------------------------------
// TiDE

Tide::Tide(TideConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.quantiles.validate();
  if (cfg_.lookback == 0 || cfg_.horizon == 0 || cfg_.n_targets == 0 || cfg_.decoder_output_dim == 0 ||
      cfg_.temporal_decoder_hidden == 0 || cfg_.hidden_size == 0 || cfg_.encoder_layers == 0 ||
      cfg_.decoder_layers == 0) {
    throw ValidationError("TiDE dimensions and depths must be positive");
  }
  if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0) throw ValidationError("TiDE dropout must lie in [0, 1)");
  const double drop = cfg_.dropout;
  const bool norm = cfg_.layer_norm;
  const std::size_t L = cfg_.lookback, H = cfg_.horizon;
  const std::size_t slots = cfg_.quantiles.slots();
  std::size_t projected = 0;
  if (cfg_.n_covariates > 0) {
    if (cfg_.temporal_width == 0) throw ValidationError("TiDE temporal width must be positive");
    const std::size_t ph = cfg_.projection_hidden ? cfg_.projection_hidden : cfg_.hidden_size;
    projection_ = ResidualBlock::create(params_, "tide.projection", cfg_.n_covariates, ph, cfg_.temporal_width, drop, norm);
    projected = cfg_.temporal_width;
  }
  std::size_t width = L * cfg_.n_targets + (L + H) * projected + cfg_.n_static;
  for (std::size_t i = 0; i < cfg_.encoder_layers; ++i) {
    encoder_.push_back(
        ResidualBlock::create(params_, "tide.encoder" + std::to_string(i), width, cfg_.hidden_size, cfg_.hidden_size, drop,
                              norm));
    width = cfg_.hidden_size;
  }
  for (std::size_t i = 0; i < cfg_.decoder_layers; ++i) {
    const bool last = i + 1 == cfg_.decoder_layers;
    const std::size_t out = last ? decoder_output_size() : cfg_.hidden_size;
    decoder_.push_back(
        ResidualBlock::create(params_, "tide.decoder" + std::to_string(i), width, cfg_.hidden_size, out, drop, norm));
    width = out;
  }
  temporal_decoder_ = ResidualBlock::create(params_, "tide.temporal_decoder", cfg_.decoder_output_dim + projected,
                                            cfg_.temporal_decoder_hidden, cfg_.n_targets * slots, drop, norm);
  lookback_skip_ =
      DenseLayer::create(params_, "tide.lookback_skip", L * cfg_.n_targets, H * cfg_.n_targets * slots,
                         Activation::identity);
}

Var Tide::forward(Tape& t, const ModelInput& in) {
  const std::size_t L = cfg_.lookback, H = cfg_.horizon, nt = cfg_.n_targets, r = cfg_.n_covariates;
  const std::size_t C = nt + r;
  check_input("tide", in, L, C);
  const std::size_t B = in.batch();
  if (r > 0) {
    const Tensor& f = in.future_covariates;
    if (f.rank() != 3 || f.dim(0) != B || f.dim(1) < H || f.dim(2) != r) {
      throw ValidationError("shape mismatch at tide future covariates: expected [B, " + std::to_string(H) + ", " +
                            std::to_string(r) + "], got " + nn::shape_string(f.shape));
    }
  }
  if (cfg_.n_static > 0 && (in.statics.rank() != 2 || in.statics.dim(0) != B || in.statics.dim(1) != cfg_.n_static)) {
    throw ValidationError("shape mismatch at tide static covariates");
  }

  Tensor lookback({B, L * nt});
  Tensor covariates({B, L + H, r});
  const std::size_t future_len = r > 0 ? in.future_covariates.dim(1) : 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < L; ++s) {
      const double* row = &in.inputs.data[(b * L + s) * C];
      for (std::size_t k = 0; k < nt; ++k) lookback.data[b * L * nt + s * nt + k] = row[k];
      for (std::size_t k = 0; k < r; ++k) covariates.data[(b * (L + H) + s) * r + k] = row[nt + k];
    }
    for (std::size_t h = 0; h < H && r > 0; ++h)
      for (std::size_t k = 0; k < r; ++k)
        covariates.data[(b * (L + H) + L + h) * r + k] = in.future_covariates.data[(b * future_len + h) * r + k];
  }

  Var y_past = t.constant(std::move(lookback), "tide.lookback");
  std::vector<Var> encoder_parts{y_past};
  std::optional<Var> projected;
  if (projection_) {
    Var cov = t.constant(Tensor({B * (L + H), r}, std::move(covariates.data)), "tide.covariates");
    Var proj = projection_->forward(t, params_, cov, in.dropout_rng);
    projected = nn::reshape(t, proj, {B, L + H, cfg_.temporal_width});
    encoder_parts.push_back(nn::reshape(t, proj, {B, (L + H) * cfg_.temporal_width}));
  }
  if (cfg_.n_static > 0) encoder_parts.push_back(t.constant(in.statics, "tide.static"));

  Var e = nn::concat_last(t, encoder_parts);
  for (const ResidualBlock& blk : encoder_) e = blk.forward(t, params_, e, in.dropout_rng);
  Var g = e;
  for (const ResidualBlock& blk : decoder_) g = blk.forward(t, params_, g, in.dropout_rng);

  // g holds H decoded vectors of width p, one per horizon step.
  Var d = nn::reshape(t, g, {B * H, cfg_.decoder_output_dim});
  Var td_in = d;
  if (projected) {
    Var future = nn::reshape(t, nn::slice_steps(t, *projected, L, L + H), {B * H, cfg_.temporal_width});
    const std::vector<Var> parts{d, future};
    td_in = nn::concat_last(t, parts);
  }
  const std::size_t out_width = nt * cfg_.quantiles.slots();
  Var y = nn::reshape(t, temporal_decoder_.forward(t, params_, td_in, in.dropout_rng), {B, H * out_width});
  return nn::add(t, y, lookback_skip_.forward(t, params_, y_past));
}

// ---------------------------------------------------------------------------
// Model

Model::Model(const ModelConfig& cfg)
    : impl_(std::visit(
          [](const auto& c) -> std::variant<Mlp, Tcn, Tide> {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, MlpConfig>) return Mlp(c);
            else if constexpr (std::is_same_v<T, TcnConfig>) return Tcn(c);
            else return Tide(c);
          },
          cfg)) {}

Family Model::family() const {
  switch (impl_.index()) {
    case 0: return Family::ann;
    case 1: return Family::tcn;
    default: return Family::tide;
  }
}

ModelConfig Model::config() const {
  return std::visit([](const auto& m) -> ModelConfig { return m.config(); }, impl_);
}

nn::ParameterSet& Model::params() {
  return std::visit([](auto& m) -> nn::ParameterSet& { return m.params(); }, impl_);
}

const nn::ParameterSet& Model::params() const {
  return std::visit([](const auto& m) -> const nn::ParameterSet& { return m.params(); }, impl_);
}

std::size_t Model::lookback() const {
  return std::visit([](const auto& m) { return m.config().lookback; }, impl_);
}

std::size_t Model::horizon() const {
  if (const auto* tide = std::get_if<Tide>(&impl_)) return tide->config().horizon;
  return 1;
}

std::size_t Model::n_targets() const {
  return std::visit([](const auto& m) { return m.config().n_targets; }, impl_);
}

std::size_t Model::n_covariates() const {
  return std::visit([](const auto& m) { return m.config().n_covariates; }, impl_);
}

const QuantileHead& Model::quantiles() const {
  return std::visit([](const auto& m) -> const QuantileHead& { return m.config().quantiles; }, impl_);
}

std::size_t Model::output_size() const { return horizon() * n_targets() * quantiles().slots(); }

Var Model::forward(Tape& t, const ModelInput& in) {
  return std::visit([&](auto& m) { return m.forward(t, in); }, impl_);
}

std::vector<double> Model::predict(const ModelInput& in) {
  Tape t;
  Var y = forward(t, in);
  return t.value(y).data;
}

std::vector<double> enforce_non_crossing(std::span<const double> outputs, std::size_t slots) {
  if (slots == 0 || outputs.size() % slots != 0) {
    throw ValidationError("output length is not a multiple of the quantile slot count");
  }
  std::vector<double> out(outputs.begin(), outputs.end());
  for (std::size_t i = 0; i < out.size(); i += slots) std::sort(out.begin() + i, out.begin() + i + slots);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("model config field '") + key + "' has the wrong type");
  }
}

void read_common(const nlohmann::json& j, std::size_t& lookback, std::size_t& n_targets, std::size_t& n_covariates,
                 QuantileHead& q) {
  read_field(j, "lookback", lookback);
  read_field(j, "n_targets", n_targets);
  read_field(j, "n_covariates", n_covariates);
  read_field(j, "quantiles", q.alphas);
  q.validate();
}

Activation read_activation(const nlohmann::json& j, Activation fallback) {
  if (!j.contains("activation")) return fallback;
  return nn::activation_from_name(j.at("activation").get<std::string>());
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& cfg) {
  return std::visit(
      [](const auto& c) -> nlohmann::json {
        using T = std::decay_t<decltype(c)>;
        nlohmann::json j{{"lookback", c.lookback},
                         {"n_targets", c.n_targets},
                         {"n_covariates", c.n_covariates},
                         {"quantiles", c.quantiles.alphas}};
        if constexpr (std::is_same_v<T, MlpConfig>) {
          j["n_layers"] = c.n_layers;
          j["n_neurons"] = c.n_neurons;
          j["activation"] = nn::activation_name(c.activation);
        } else if constexpr (std::is_same_v<T, TcnConfig>) {
          j["kernel"] = c.kernel;
          j["n_filters"] = c.n_filters;
          j["dilation_base"] = c.dilation_base;
          j["n_blocks"] = c.n_blocks;
          j["activation"] = nn::activation_name(c.activation);
          j["dropout"] = c.dropout;
          j["weight_norm"] = c.weight_norm;
        } else {
          j["temporal_width"] = c.temporal_width;
          j["decoder_output_dim"] = c.decoder_output_dim;
          j["temporal_decoder_hidden"] = c.temporal_decoder_hidden;
          j["hidden_size"] = c.hidden_size;
          j["encoder_layers"] = c.encoder_layers;
          j["decoder_layers"] = c.decoder_layers;
          j["projection_hidden"] = c.projection_hidden;
          j["horizon"] = c.horizon;
          j["n_static"] = c.n_static;
          j["dropout"] = c.dropout;
          j["layer_norm"] = c.layer_norm;
        }
        return j;
      },
      cfg);
}

ModelConfig config_from_json(Family family, const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("model config must be a JSON object");
  switch (family) {
    case Family::ann: {
      MlpConfig c;
      read_common(j, c.lookback, c.n_targets, c.n_covariates, c.quantiles);
      read_field(j, "n_layers", c.n_layers);
      read_field(j, "n_neurons", c.n_neurons);
      c.activation = read_activation(j, c.activation);
      return c;
    }
    case Family::tcn: {
      TcnConfig c;
      read_common(j, c.lookback, c.n_targets, c.n_covariates, c.quantiles);
      read_field(j, "kernel", c.kernel);
      read_field(j, "n_filters", c.n_filters);
      read_field(j, "dilation_base", c.dilation_base);
      read_field(j, "n_blocks", c.n_blocks);
      read_field(j, "dropout", c.dropout);
      read_field(j, "weight_norm", c.weight_norm);
      c.activation = read_activation(j, c.activation);
      return c;
    }
    case Family::tide: {
      TideConfig c;
      read_common(j, c.lookback, c.n_targets, c.n_covariates, c.quantiles);
      read_field(j, "temporal_width", c.temporal_width);
      read_field(j, "decoder_output_dim", c.decoder_output_dim);
      read_field(j, "temporal_decoder_hidden", c.temporal_decoder_hidden);
      read_field(j, "hidden_size", c.hidden_size);
      read_field(j, "encoder_layers", c.encoder_layers);
      read_field(j, "decoder_layers", c.decoder_layers);
      read_field(j, "projection_hidden", c.projection_hidden);
      read_field(j, "horizon", c.horizon);
      read_field(j, "n_static", c.n_static);
      read_field(j, "dropout", c.dropout);
      read_field(j, "layer_norm", c.layer_norm);
      return c;
    }
  }
  throw ValidationError("unknown model family");
}

}  // namespace toilcast::models
