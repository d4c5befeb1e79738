#include "toilcast/synth.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "toilcast/errors.hpp"
#include "toilcast/rng.hpp"

namespace toilcast::synth {

namespace {

enum Stream : std::uint64_t { kLoadStream = 1, kAmbientStream = 2, kMeasurementStream = 3 };

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  if (days < 1) throw ValidationError("synthetic spec needs at least one day");
  for (double s : {load.noise_sigma, ambient.noise_sigma, measurement_sigma}) {
    if (!(s >= 0.0)) throw ValidationError("synthetic noise levels must be non-negative");
  }
  if (std::abs(ambient.ar_coefficient) >= 1.0) throw ValidationError("ambient AR coefficient must lie in (-1, 1)");
  if (start % kOneHour != 0) throw ValidationError("synthetic start must fall on a full hour");
  iec.validate();
}

iec::IecParams illustrative_params() {
  iec::IecParams p;
  p.psi = 6.0;
  p.delta_t_or = 45.0;
  p.chi = 0.8;
  p.k11 = 0.5;
  p.tau_o = 210.0;
  p.tau_w = 10.0;
  return p;
}

Profiles gen_profiles(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.days * static_cast<std::size_t>(kOneDay / kFiveMinutes) + 1;
  const std::size_t hours = spec.days * 24 + 1;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  Profiles p;
  p.load_factor.step = kFiveMinutes;
  p.ambient_hourly.step = kOneHour;

  Rng load_rng(derive_seed(spec.seed, kLoadStream));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Instant t = spec.start + static_cast<Instant>(i) * kFiveMinutes;
    const double hour_of_day = static_cast<double>((t % kOneDay + kOneDay) % kOneDay) / 3600.0;
    const double days_elapsed = static_cast<double>(t - spec.start) / static_cast<double>(kOneDay);
    double k = spec.load.mean + spec.load.diurnal_amplitude * std::cos(two_pi * (hour_of_day - spec.load.peak_hour) / 24.0) +
               spec.load.weekly_amplitude * std::cos(two_pi * days_elapsed / 7.0);
    if (spec.load.noise_sigma > 0.0) k += spec.load.noise_sigma * normal(load_rng);
    p.load_factor.timestamps.push_back(t);
    p.load_factor.values.push_back(std::max(k, 0.0));
  }

  Rng ambient_rng(derive_seed(spec.seed, kAmbientStream));
  double ar = 0.0;
  for (std::size_t h = 0; h < hours; ++h) {
    const Instant t = spec.start + static_cast<Instant>(h) * kOneHour;
    const double hour_of_day = static_cast<double>((t % kOneDay + kOneDay) % kOneDay) / 3600.0;
    if (spec.ambient.noise_sigma > 0.0) ar = spec.ambient.ar_coefficient * ar + spec.ambient.noise_sigma * normal(ambient_rng);
    const double ta = spec.ambient.mean +
                      spec.ambient.diurnal_amplitude * std::cos(two_pi * (hour_of_day - spec.ambient.peak_hour) / 24.0) + ar;
    p.ambient_hourly.timestamps.push_back(t);
    p.ambient_hourly.values.push_back(ta);
  }
  p.ambient = resample_ambient_linear(p.ambient_hourly, p.load_factor.timestamps, kFiveMinutes);
  return p;
}

SynthDataset gen_dataset(const SynthSpec& spec) {
  Profiles prof = gen_profiles(spec);
  const auto& K = prof.load_factor.values;
  const auto& Ta = prof.ambient.values;
  const double dt = static_cast<double>(kFiveMinutes) / 60.0;
  const double t0 = iec::steady_state(K.front(), Ta.front(), spec.iec);

  std::vector<double> clean;
  if (spec.tau_load_coeff == 0.0) {
    clean = iec::simulate(K, Ta, t0, dt, dt, spec.iec);
  } else {
    clean.reserve(K.size());
    double t_oil = t0;
    clean.push_back(t_oil);
    for (std::size_t i = 1; i < K.size(); ++i) {
      iec::IecParams p = spec.iec;
      p.tau_o = spec.iec.tau_o * std::max(0.1, 1.0 + spec.tau_load_coeff * (K[i - 1] - 1.0));
      t_oil = iec::step(t_oil, K[i - 1], Ta[i - 1], dt, p);
      clean.push_back(t_oil);
    }
  }

  std::vector<double> noisy = clean;
  if (spec.measurement_sigma > 0.0) {
    Rng rng(derive_seed(spec.seed, kMeasurementStream));
    std::normal_distribution<double> normal(0.0, spec.measurement_sigma);
    for (double& v : noisy) v += normal(rng);
  }

  SynthDataset out;
  out.clean_top_oil = TimeSeries{prof.load_factor.timestamps, clean, kFiveMinutes};
  out.ambient_hourly = prof.ambient_hourly;
  out.data = TransformerDataset::from_vectors(prof.load_factor.timestamps, kFiveMinutes, std::move(noisy), Ta, K);
  return out;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw NumericError("cannot format number");
  return std::string(buf, ptr);
}

void write_csv(const SynthDataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory '" + dir.string() + "': " + ec.message());
  {
    auto out = open_for_write(dir / "measurements.csv");
    out << "timestamp,top_oil_c,load_factor\n";
    const auto& t = ds.data.timestamps();
    const auto& top = ds.data.channel(Channel::top_oil);
    const auto& load = ds.data.channel(Channel::load_factor);
    for (std::size_t i = 0; i < t.size(); ++i)
      out << format_instant(t[i]) << ',' << format_number(top[i]) << ',' << format_number(load[i]) << '\n';
    if (!out) throw ValidationError("failed writing measurements.csv");
  }
  {
    auto out = open_for_write(dir / "ambient.csv");
    out << "timestamp,ambient_c\n";
    for (std::size_t i = 0; i < ds.ambient_hourly.size(); ++i)
      out << format_instant(ds.ambient_hourly.timestamps[i]) << ',' << format_number(ds.ambient_hourly.values[i]) << '\n';
    if (!out) throw ValidationError("failed writing ambient.csv");
  }
  {
    auto out = open_for_write(dir / "clean_top_oil.csv");
    out << "timestamp,top_oil_c\n";
    for (std::size_t i = 0; i < ds.clean_top_oil.size(); ++i)
      out << format_instant(ds.clean_top_oil.timestamps[i]) << ',' << format_number(ds.clean_top_oil.values[i]) << '\n';
    if (!out) throw ValidationError("failed writing clean_top_oil.csv");
  }
}

}  // namespace toilcast::synth
