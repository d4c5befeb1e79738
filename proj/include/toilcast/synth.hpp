#pragma once

#include <cstdint>
#include <filesystem>

#include "toilcast/iec.hpp"
#include "toilcast/series.hpp"

namespace toilcast::synth {

/// Load factor: mean + diurnal cosine peaking at `peak_hour` + weekly
/// cosine + white noise, clamped at zero.
struct LoadProfile {
  double mean = 0.7;
  double diurnal_amplitude = 0.3;
  double peak_hour = 18.0;
  double weekly_amplitude = 0.05;
  double noise_sigma = 0.02;
};

/// Hourly ambient: mean + diurnal cosine peaking at `peak_hour` + AR(1)
/// noise, then linearly interpolated onto the 5-minute grid.
struct AmbientProfile {
  double mean = 15.0;
  double diurnal_amplitude = 5.0;
  double peak_hour = 15.0;
  double ar_coefficient = 0.95;
  double noise_sigma = 0.5;
};

struct SynthSpec {
  std::size_t days = 60;
  std::uint64_t seed = 1;
  Instant start = 1593561600;  ///< 2020-07-01T00:00:00Z
  iec::IecParams iec;
  LoadProfile load;
  AmbientProfile ambient;
  double measurement_sigma = 0.5;  ///< [K]
  /// Optional model mismatch: the generator's oil time constant becomes
  /// τ_o·(1 + coeff·(K - 1)). Zero keeps the generator identical to the
  /// IEC solver.
  double tau_load_coeff = 0.0;

  void validate() const;
};

/// Illustrative ONAN constants; not taken from any particular unit.
iec::IecParams illustrative_params();

struct Profiles {
  TimeSeries load_factor;     ///< 5-minute grid, days·288 + 1 samples
  TimeSeries ambient;         ///< 5-minute grid
  TimeSeries ambient_hourly;  ///< the hourly readings the grid is interpolated from
};

Profiles gen_profiles(const SynthSpec& spec);

struct SynthDataset {
  TransformerDataset data;   ///< noisy top-oil
  TimeSeries clean_top_oil;  ///< noise-free trajectory
  TimeSeries ambient_hourly;
};

SynthDataset gen_dataset(const SynthSpec& spec);

/// Writes measurements.csv (timestamp,top_oil_c,load_factor), ambient.csv
/// (timestamp,ambient_c, hourly) and clean_top_oil.csv into `dir`.
void write_csv(const SynthDataset& ds, const std::filesystem::path& dir);

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace toilcast::synth
