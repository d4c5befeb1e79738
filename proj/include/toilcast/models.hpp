#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "toilcast/autodiff.hpp"
#include "toilcast/rng.hpp"
#include "toilcast/tensor.hpp"

namespace toilcast::models {

using nn::Activation;

/// Quantile levels, strictly increasing inside (0, 1). Empty means a point
/// forecast with one output slot.
struct QuantileHead {
  std::vector<double> alphas;

  static QuantileHead pi98() { return {{0.01, 0.5, 0.99}}; }
  void validate() const;
  std::size_t slots() const { return alphas.empty() ? 1 : alphas.size(); }
  bool is_quantile() const { return !alphas.empty(); }
  /// Index of α = 0.5, if present.
  std::optional<std::size_t> median_index() const;
};

struct MlpConfig {
  std::size_t n_layers = 2;
  std::size_t n_neurons = 32;
  Activation activation = Activation::relu;
  std::size_t lookback = 48;
  std::size_t n_targets = 1;
  std::size_t n_covariates = 2;
  QuantileHead quantiles;
};

struct TcnConfig {
  std::size_t kernel = 2;
  std::size_t n_filters = 16;
  std::size_t dilation_base = 2;
  /// 0 picks the smallest count whose receptive field covers the look-back.
  std::size_t n_blocks = 0;
  Activation activation = Activation::relu;
  double dropout = 0.0;
  bool weight_norm = false;
  std::size_t lookback = 48;
  std::size_t n_targets = 1;
  std::size_t n_covariates = 2;
  QuantileHead quantiles;
};

struct TideConfig {
  std::size_t temporal_width = 4;          ///< projected covariate width
  std::size_t decoder_output_dim = 8;      ///< p
  std::size_t temporal_decoder_hidden = 8;
  std::size_t hidden_size = 64;            ///< encoder/decoder residual width
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t projection_hidden = 0;       ///< 0 uses hidden_size
  std::size_t lookback = 48;
  std::size_t horizon = 1;
  std::size_t n_targets = 1;
  std::size_t n_covariates = 2;
  std::size_t n_static = 0;
  double dropout = 0.0;
  bool layer_norm = false;
  QuantileHead quantiles;
};

enum class Family { ann, tcn, tide };
std::string family_name(Family f);
Family family_from_name(const std::string& name);

/// Receptive field of a TCN stack: 1 + (k-1)·convs_per_block·Σ dilations.
std::size_t receptive_field(std::size_t kernel, std::span<const std::size_t> dilations,
                            std::size_t convs_per_block = 2);
std::size_t receptive_field(const TcnConfig& cfg);
/// Blocks the TCN will actually use (resolves n_blocks == 0).
std::size_t tcn_block_count(const TcnConfig& cfg);

/// One forward batch. `inputs` is [B, L, n_targets + n_covariates] with the
/// target channels first; `future_covariates` is [B, H, n_covariates];
/// `statics` is [B, n_static] or empty.
struct ModelInput {
  nn::Tensor inputs;
  nn::Tensor future_covariates;
  nn::Tensor statics;
  /// Set during training to enable dropout.
  Rng* dropout_rng = nullptr;

  std::size_t batch() const { return inputs.rank() ? inputs.dim(0) : 0; }
};

/// y = φ(x·wᵀ + b).
struct DenseLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  Activation activation = Activation::identity;

  static DenseLayer create(nn::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                           Activation act);
  nn::Var forward(nn::Tape& t, nn::ParameterSet& ps, nn::Var x) const;
};

/// dense → ReLU → dense (→ dropout), plus a linear skip of the input,
/// optionally layer-normalized.
struct ResidualBlock {
  DenseLayer hidden;
  DenseLayer out;
  DenseLayer skip;
  double dropout = 0.0;
  std::optional<std::size_t> norm_gain;
  std::optional<std::size_t> norm_bias;

  static ResidualBlock create(nn::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden,
                              std::size_t out, double dropout = 0.0, bool layer_norm = false);
  nn::Var forward(nn::Tape& t, nn::ParameterSet& ps, nn::Var x, Rng* rng = nullptr) const;
};

/// With weight norm, `weight` holds the direction and `magnitude` the
/// per-output-channel scale.
struct CausalConvLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t dilation = 1;
  std::optional<std::size_t> magnitude;

  static CausalConvLayer create(nn::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                                std::size_t kernel, std::size_t dilation, bool weight_norm = false);
  nn::Var forward(nn::Tape& t, nn::ParameterSet& ps, nn::Var x) const;
};

class Mlp {
 public:
  explicit Mlp(MlpConfig cfg);
  const MlpConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  nn::Var forward(nn::Tape& t, const ModelInput& in);

 private:
  MlpConfig cfg_;
  nn::ParameterSet params_;
  std::vector<DenseLayer> layers_;
};

class Tcn {
 public:
  explicit Tcn(TcnConfig cfg);
  const TcnConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  /// Head applied at every timestep: [B, L, H·n_targets·slots].
  nn::Var forward_sequence(nn::Tape& t, const ModelInput& in);
  /// Final-timestep forecast: [B, H·n_targets·slots].
  nn::Var forward(nn::Tape& t, const ModelInput& in);

 private:
  struct Block {
    CausalConvLayer conv1;
    CausalConvLayer conv2;
    std::optional<CausalConvLayer> downsample;
  };
  TcnConfig cfg_;
  nn::ParameterSet params_;
  std::vector<Block> blocks_;
  DenseLayer head_;
};

class Tide {
 public:
  explicit Tide(TideConfig cfg);
  const TideConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  nn::Var forward(nn::Tape& t, const ModelInput& in);

  /// Length of the dense decoder output g (p·H).
  std::size_t decoder_output_size() const { return cfg_.decoder_output_dim * cfg_.horizon; }
  /// Parameters of the global linear look-back map; all others form the
  /// nonlinear path.
  std::vector<std::size_t> global_residual_params() const { return {lookback_skip_.weight, lookback_skip_.bias}; }

 private:
  TideConfig cfg_;
  nn::ParameterSet params_;
  std::optional<ResidualBlock> projection_;
  std::vector<ResidualBlock> encoder_;
  std::vector<ResidualBlock> decoder_;
  ResidualBlock temporal_decoder_;
  DenseLayer lookback_skip_;
};

using ModelConfig = std::variant<MlpConfig, TcnConfig, TideConfig>;

/// Any of the three forecasters, with value semantics.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  Family family() const;
  ModelConfig config() const;
  nn::ParameterSet& params();
  const nn::ParameterSet& params() const;

  std::size_t lookback() const;
  std::size_t horizon() const;
  std::size_t n_targets() const;
  std::size_t n_covariates() const;
  const QuantileHead& quantiles() const;
  /// H · n_targets · slots.
  std::size_t output_size() const;

  /// [B, output_size()], laid out [h][target][slot].
  nn::Var forward(nn::Tape& t, const ModelInput& in);
  /// Convenience forward on a fresh tape.
  std::vector<double> predict(const ModelInput& in);

  std::variant<Mlp, Tcn, Tide>& impl() { return impl_; }

 private:
  std::variant<Mlp, Tcn, Tide> impl_;
};

/// Sorts each group of quantile slots ascending; idempotent.
std::vector<double> enforce_non_crossing(std::span<const double> outputs, std::size_t slots);

nlohmann::json config_to_json(const ModelConfig& cfg);
/// `family` selects the config type; missing fields keep their defaults.
ModelConfig config_from_json(Family family, const nlohmann::json& j);

}  // namespace toilcast::models
