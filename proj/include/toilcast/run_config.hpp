#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "toilcast/iec.hpp"
#include "toilcast/models.hpp"
#include "toilcast/series.hpp"
#include "toilcast/synth.hpp"
#include "toilcast/trainer.hpp"

namespace toilcast::config {

/// Measured input files. Column names default to the synthetic writer's.
struct FileSource {
  std::filesystem::path measurements;
  std::filesystem::path ambient;
  int utc_offset_minutes = 0;
  std::string timestamp_column = "timestamp";  ///< measurements file only
  std::string top_oil_column = "top_oil_c";
  std::string load_column = "load_factor";
  std::string ambient_column = "ambient_c";
  /// When set, `load_column` holds current in amperes.
  std::optional<double> rated_current;
};

struct SplitDays {
  double train_days = 0.0;
  double valid_days = 0.0;
};

struct RunConfig {
  nlohmann::json raw;
  std::filesystem::path base_dir;  ///< relative paths resolve against this
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";

  std::optional<synth::SynthSpec> synth;
  std::optional<FileSource> files;
  std::optional<SplitSpec> split;
  std::optional<SplitDays> split_days;

  AffineScaler scaler;
  std::vector<Channel> targets{Channel::top_oil};
  std::vector<Channel> covariates{Channel::ambient, Channel::load_factor};
  std::vector<double> quantiles{0.01, 0.5, 0.99};

  std::optional<std::filesystem::path> iec_params;
  double iec_dt_min = 5.0;
  bool allow_coarse_step = false;

  /// Hash of the whole config after overrides.
  std::string hash() const;
  /// Hash of the sections a checkpoint must agree with at evaluation.
  std::string data_hash() const;

  /// Model config for `family`: defaults, then `models.<family>`, then the
  /// config's targets, covariates and (for quantile loss) levels.
  models::ModelConfig model_config(models::Family family, bool quantile) const;
  /// Per-family defaults overridden by `train.<family>`; seed from the run.
  trainer::TrainConfig train_config(models::Family family, bool quantile) const;
  /// `grid.<family>`: either "standard" or an object of candidate lists plus
  /// an optional "lookbacks" list.
  trainer::GridSpec grid_spec(models::Family family) const;
  WindowSpec window_spec(std::size_t lookback, std::size_t horizon) const;
  iec::IecParams load_iec_params() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Parses and validates a run config. `TOILCAST_SEED` in the environment
/// overrides "seed". Missing required keys are named in the error.
RunConfig load(const std::filesystem::path& path);
RunConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir = {});

/// Synthetic or file-backed dataset described by the config.
TransformerDataset load_dataset(const RunConfig& cfg);
std::pair<TransformerDataset, TransformerDataset> split_dataset(const RunConfig& cfg, const TransformerDataset& ds);

}  // namespace toilcast::config
