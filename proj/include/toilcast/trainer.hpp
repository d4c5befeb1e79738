#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "toilcast/metrics.hpp"
#include "toilcast/models.hpp"
#include "toilcast/series.hpp"

namespace toilcast::trainer {

enum class Optimizer { adam, sgd };

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  metrics::LossKind loss;
  Optimizer optimizer = Optimizer::adam;
  /// Stop after this many epochs without improvement; 0 disables.
  std::size_t patience = 0;

  void validate() const;
};

/// Batch size, epoch ceiling and learning rate used for each family.
TrainConfig reference_defaults(models::Family family, bool quantile);

struct TrainReport {
  double initial_loss = 0.0;
  /// Training loss over all windows, measured after each epoch.
  std::vector<double> epoch_loss;
  double wall_seconds = 0.0;
  std::string checksum;

  std::size_t epochs_run() const { return epoch_loss.size(); }
  nlohmann::json to_json() const;
};

/// Full-window training objective for the current parameters.
double training_loss(models::Model& model, const WindowSet& windows, const metrics::LossKind& loss);

/// Shuffled mini-batch training. Throws NumericError naming the epoch and
/// batch if the loss or a gradient becomes non-finite.
TrainReport train(models::Model& model, const WindowSet& windows, const TrainConfig& cfg);

/// Rows of `windows` as a model batch.
models::ModelInput gather_batch(const WindowSet& windows, std::span<const std::size_t> rows);

struct GridSpec {
  models::Family family = models::Family::ann;
  /// Parameter name -> candidate values; keys enumerate in sorted order.
  std::map<std::string, std::vector<nlohmann::json>> values;
  std::vector<std::size_t> lookbacks{24, 48, 96};

  /// Built-in candidate lists for each family.
  static GridSpec standard(models::Family family);
  std::size_t trial_count() const;
  /// Every configuration as a JSON object including "lookback".
  std::vector<nlohmann::json> enumerate() const;
};

struct TrialResult {
  std::size_t trial_id = 0;
  models::Family family = models::Family::ann;
  nlohmann::json params;
  std::size_t lookback = 0;
  double val_mae = 0.0;
  double val_mse = 0.0;
  std::size_t n_parameters = 0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

/// Everything a trial needs besides its configuration.
struct GridData {
  TransformerDataset train;
  TransformerDataset valid;
  WindowSpec window;  ///< lookback is overridden per trial
  AffineScaler scaler;
  nlohmann::json base_config;  ///< fields not covered by the grid
};

/// Trains and scores every configuration by autoregressive validation MAE
/// of the first target. Failed trials are kept with their error as status.
/// `on_trial` fires after each trial completes. Results are ranked.
std::vector<TrialResult> grid_search(const GridSpec& grid, const GridData& data, const TrainConfig& train_cfg,
                                     const std::function<void(const TrialResult&)>& on_trial = {});

/// Successful trials first by ascending MAE, then fewer parameters, then
/// config order; failures last.
std::vector<TrialResult> rank(std::vector<TrialResult> trials);
/// Throws if no trial succeeded.
TrialResult select_best(const std::vector<TrialResult>& ranked);

std::string results_csv_header();
std::string results_csv_row(const TrialResult& r);

}  // namespace toilcast::trainer
