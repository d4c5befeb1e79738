#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "toilcast/iec.hpp"
#include "toilcast/models.hpp"
#include "toilcast/series.hpp"

namespace toilcast::rolling {

/// What a one-step forecaster sees at validation row `index`. Values are in
/// physical units; target history contains fed-back predictions once the
/// seed window is exhausted.
struct StepInput {
  std::size_t index = 0;                     ///< validation row being predicted
  std::span<const double> past_targets;      ///< L × n_targets, oldest first
  std::span<const double> past_covariates;   ///< L × n_covariates
  std::span<const double> future_covariates; ///< 1 × n_covariates, at `index`
};

/// A one-step-ahead forecaster in physical units.
class StepPredictor {
 public:
  virtual ~StepPredictor() = default;
  virtual std::size_t lookback() const = 0;
  virtual std::size_t n_targets() const = 0;
  /// Empty for point forecasters.
  virtual std::vector<double> alphas() const { return {}; }
  /// n_targets × max(1, |alphas|) values, target-major.
  virtual std::vector<double> predict(const StepInput& in) = 0;
};

/// Wraps a trained Model with its scaler; crossing quantiles are sorted.
class NeuralPredictor : public StepPredictor {
 public:
  NeuralPredictor(models::Model& model, AffineScaler scaler, WindowSpec spec);
  std::size_t lookback() const override { return spec_.lookback; }
  std::size_t n_targets() const override { return spec_.targets.size(); }
  std::vector<double> alphas() const override { return model_.quantiles().alphas; }
  std::vector<double> predict(const StepInput& in) override;

 private:
  models::Model& model_;
  AffineScaler scaler_;
  WindowSpec spec_;
};

struct ForecastTrace {
  std::string model_id;
  std::vector<Instant> timestamps;
  std::vector<Channel> targets;
  /// Point estimate per target (the α = 0.5 output for quantile models).
  std::vector<std::vector<double>> predicted;
  std::vector<double> alphas;
  /// [target][level][step]; empty for point models.
  std::vector<std::vector<std::vector<double>>> quantiles;

  std::size_t size() const { return timestamps.size(); }
  bool is_quantile() const { return !alphas.empty(); }
};

/// Rolls a one-step forecaster over `valid`: the first window is seeded
/// from measurements, after which predicted targets replace measured ones
/// in the look-back while covariates stay measured.
ForecastTrace autoregressive_predict(StepPredictor& model, const TransformerDataset& valid, const WindowSpec& spec,
                                     std::string model_id);

/// Free-running IEC solution seeded at the first measured top-oil value.
/// The trace covers rows [skip, N).
ForecastTrace iec_predict(const iec::IecParams& params, const TransformerDataset& valid, double dt_min,
                          std::size_t skip = 0, const iec::SimulateOptions& opts = {},
                          std::string model_id = "iec");

struct TargetMetrics {
  double mae = 0.0;
  double mse = 0.0;
  std::optional<double> picp;
  std::optional<double> mean_width;
};

struct ModelMetrics {
  std::string model_id;
  std::vector<std::pair<Channel, TargetMetrics>> targets;
};

struct EvaluationReport {
  std::vector<ModelMetrics> models;
  std::string config_hash;
  Instant span_start = 0;
  Instant span_end = 0;
  std::size_t n_points = 0;

  nlohmann::json to_json() const;
};

/// Metrics over the timestamps shared by every trace. Quantile traces add
/// PICP and mean width of the outermost levels' interval.
EvaluationReport evaluate(const std::vector<ForecastTrace>& traces, const TransformerDataset& valid,
                          std::string config_hash = {});

/// `timestamp,measured,predicted[,q..]` for the first target.
void write_predictions_csv(const ForecastTrace& trace, const TransformerDataset& valid,
                           const std::filesystem::path& path);

/// Column label for a level, e.g. 0.01 -> q01, 0.5 -> q50.
std::string quantile_label(double alpha);

}  // namespace toilcast::rolling
