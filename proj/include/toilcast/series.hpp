#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace toilcast {

/// Seconds since the Unix epoch, UTC.
using Instant = std::int64_t;

constexpr std::int64_t kFiveMinutes = 300;
constexpr std::int64_t kOneHour = 3600;
constexpr std::int64_t kOneDay = 86400;

/// Parses `YYYY-MM-DD[T| ]HH:MM[:SS][Z|±HH:MM]`. Times without an explicit
/// zone are read at `default_offset_minutes` east of UTC.
Instant parse_instant(std::string_view text, int default_offset_minutes = 0);

/// `YYYY-MM-DDTHH:MM:SSZ`
std::string format_instant(Instant t);

/// Parses a fixed offset such as `+01:00`, `-0530` or `Z`; returns minutes.
int parse_utc_offset(std::string_view text);

/// A regularly sampled series. Missing samples are stored as NaN.
struct TimeSeries {
  std::vector<Instant> timestamps;
  std::vector<double> values;
  std::int64_t step = kFiveMinutes;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  bool has_missing() const;

  /// Throws if timestamps are not strictly increasing or lengths differ.
  void validate() const;
  /// validate() plus: every delta equals `step` and nothing is missing.
  void validate_regular() const;
};

enum class Channel { top_oil, ambient, load_factor, temp_rise };

std::string_view channel_name(Channel c);
Channel channel_from_name(std::string_view name);

/// Four aligned channels on one timestamp grid. temp_rise is always derived
/// from top_oil and ambient, never supplied.
class TransformerDataset {
 public:
  TransformerDataset() = default;

  static TransformerDataset from_channels(const TimeSeries& top_oil, const TimeSeries& ambient,
                                          const TimeSeries& load_factor);
  static TransformerDataset from_vectors(std::vector<Instant> timestamps, std::int64_t step,
                                         std::vector<double> top_oil, std::vector<double> ambient,
                                         std::vector<double> load_factor);

  std::size_t size() const { return timestamps_.size(); }
  std::int64_t step() const { return step_; }
  const std::vector<Instant>& timestamps() const { return timestamps_; }
  const std::vector<double>& channel(Channel c) const;
  TimeSeries series(Channel c) const;

  /// Rows [begin, end).
  TransformerDataset slice(std::size_t begin, std::size_t end) const;
  /// Copy with a replaced channel; temp_rise is re-derived. temp_rise itself
  /// cannot be replaced.
  TransformerDataset with_channel(Channel c, std::vector<double> values) const;

 private:
  void check_invariants() const;

  std::vector<Instant> timestamps_;
  std::int64_t step_ = kFiveMinutes;
  std::vector<double> top_oil_;
  std::vector<double> ambient_;
  std::vector<double> load_factor_;
  std::vector<double> temp_rise_;
};

/// Reads a CSV keyed by `timestamp_column`. `column_map` maps output series
/// names to CSV header names. Empty, `NaN` or `NA` fields become missing
/// samples. The returned series carry `step` as their nominal cadence.
std::map<std::string, TimeSeries> ingest_measurements(
    const std::filesystem::path& path, const std::map<std::string, std::string>& column_map,
    std::int64_t step = kFiveMinutes, int utc_offset_minutes = 0, const std::string& timestamp_column = "timestamp");

/// Inserts missing (NaN) samples wherever the series skips grid instants.
/// Timestamps must fall on the grid anchored at the first sample.
TimeSeries regularize(const TimeSeries& s, std::int64_t step);

/// Interior missing samples become the mean of their present neighbours; a
/// run of several missing samples is filled linearly between its bounds.
TimeSeries fill_gaps_adjacent_mean(const TimeSeries& s);

/// Linear interpolation of an hourly series onto `grid`. No extrapolation.
TimeSeries resample_ambient_linear(const TimeSeries& hourly, const std::vector<Instant>& grid,
                                   std::int64_t grid_step = kFiveMinutes);

/// Current [A] over rated current [A].
TimeSeries derive_load_factor(const TimeSeries& current, double rated_current);

struct SplitSpec {
  Instant train_start = 0;
  Instant train_end = 0;
  Instant valid_start = 0;
  Instant valid_end = 0;
};

/// Both ranges are inclusive at both ends.
std::pair<TransformerDataset, TransformerDataset> split(const TransformerDataset& ds,
                                                        const SplitSpec& spec);

/// y = gain * x + offset, per channel. Channels without an entry are identity.
class AffineScaler {
 public:
  struct Affine {
    double gain = 1.0;
    double offset = 0.0;
  };

  void set(Channel c, double gain, double offset);
  Affine get(Channel c) const;
  double scale(Channel c, double x) const;
  double unscale(Channel c, double y) const;

  const std::map<Channel, Affine>& entries() const { return entries_; }

 private:
  std::map<Channel, Affine> entries_;
};

/// Look-back hours to steps on a grid of `step` seconds.
std::size_t lookback_steps(double hours, std::int64_t step = kFiveMinutes);

/// Which channels feed a model and which it predicts. Model inputs are laid
/// out per timestep as [targets..., covariates...].
struct WindowSpec {
  std::vector<Channel> targets{Channel::top_oil};
  std::vector<Channel> covariates{Channel::ambient, Channel::load_factor};
  std::size_t lookback = 48;
  std::size_t horizon = 1;

  std::size_t n_channels() const { return targets.size() + covariates.size(); }
};

/// Row-major window tensors. Window i reads rows [i, i+L) as inputs and
/// predicts rows [i+L, i+L+H).
struct WindowSet {
  std::size_t n_windows = 0;
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  std::size_t n_targets = 0;
  std::size_t n_covariates = 0;
  std::vector<double> inputs;             ///< n × L × (n_targets + n_covariates)
  std::vector<double> future_covariates;  ///< n × H × n_covariates
  std::vector<double> targets;            ///< n × H × n_targets
  std::vector<Instant> input_end_times;   ///< timestamp of the last input row
  std::vector<Instant> target_start_times;

  std::size_t input_width() const { return lookback * (n_targets + n_covariates); }
  std::size_t target_width() const { return horizon * n_targets; }
};

WindowSet make_windows(const TransformerDataset& ds, const WindowSpec& spec,
                       const AffineScaler& scaler = {});

}  // namespace toilcast
