#include "toilcast/series.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "toilcast/errors.hpp"

namespace toilcast {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool read_int(std::string_view text, std::size_t& pos, std::size_t digits, int& out) {
  if (pos + digits > text.size()) return false;
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + digits, out);
  if (ec != std::errc{} || ptr != text.data() + pos + digits) return false;
  pos += digits;
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

bool is_missing_token(std::string_view s) {
  return s.empty() || s == "NaN" || s == "nan" || s == "NA" || s == "null";
}

}  // namespace

int parse_utc_offset(std::string_view text) {
  text = trim(text);
  if (text.empty() || text == "Z" || text == "z" || text == "UTC") return 0;
  if (text.front() != '+' && text.front() != '-') {
    throw ValidationError("invalid UTC offset '" + std::string(text) + "'");
  }
  const int sign = text.front() == '-' ? -1 : 1;
  std::size_t pos = 1;
  int hh = 0;
  int mm = 0;
  if (!read_int(text, pos, 2, hh)) throw ValidationError("invalid UTC offset '" + std::string(text) + "'");
  if (pos < text.size() && text[pos] == ':') ++pos;
  if (pos < text.size() && !read_int(text, pos, 2, mm)) {
    throw ValidationError("invalid UTC offset '" + std::string(text) + "'");
  }
  if (pos != text.size() || hh > 23 || mm > 59) {
    throw ValidationError("invalid UTC offset '" + std::string(text) + "'");
  }
  return sign * (hh * 60 + mm);
}

Instant parse_instant(std::string_view text, int default_offset_minutes) {
  text = trim(text);
  auto fail = [&]() -> Instant { throw ValidationError("unparseable timestamp '" + std::string(text) + "'"); };
  std::size_t pos = 0;
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (!read_int(text, pos, 4, year) || pos >= text.size() || text[pos++] != '-') return fail();
  if (!read_int(text, pos, 2, month) || pos >= text.size() || text[pos++] != '-') return fail();
  if (!read_int(text, pos, 2, day)) return fail();
  if (pos < text.size()) {
    if (text[pos] != 'T' && text[pos] != ' ') return fail();
    ++pos;
    if (!read_int(text, pos, 2, hour) || pos >= text.size() || text[pos++] != ':') return fail();
    if (!read_int(text, pos, 2, minute)) return fail();
    if (pos < text.size() && text[pos] == ':') {
      ++pos;
      if (!read_int(text, pos, 2, second)) return fail();
    }
  }
  int offset = default_offset_minutes;
  if (pos < text.size()) offset = parse_utc_offset(text.substr(pos));
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
    return fail();
  }
  const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
  return days * kOneDay + hour * 3600 + minute * 60 + second - static_cast<std::int64_t>(offset) * 60;
}

std::string format_instant(Instant t) {
  std::int64_t days = t / kOneDay;
  std::int64_t secs = t % kOneDay;
  if (secs < 0) {
    secs += kOneDay;
    --days;
  }
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                static_cast<long long>(secs % 60));
  return buf;
}

bool TimeSeries::has_missing() const {
  return std::any_of(values.begin(), values.end(), [](double v) { return std::isnan(v); });
}

void TimeSeries::validate() const {
  if (timestamps.size() != values.size()) {
    throw ValidationError("time series has " + std::to_string(timestamps.size()) + " timestamps but " +
                          std::to_string(values.size()) + " values");
  }
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] <= timestamps[i - 1]) {
      throw ValidationError("timestamps not strictly increasing at index " + std::to_string(i) + " (" +
                            format_instant(timestamps[i]) + ")");
    }
  }
}

void TimeSeries::validate_regular() const {
  validate();
  if (step <= 0) throw ValidationError("time series step must be positive");
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] - timestamps[i - 1] != step) {
      throw ValidationError("irregular spacing at index " + std::to_string(i) + " (" +
                            format_instant(timestamps[i]) + ")");
    }
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError("missing or non-finite value at index " + std::to_string(i));
    }
  }
}

std::string_view channel_name(Channel c) {
  switch (c) {
    case Channel::top_oil: return "top_oil";
    case Channel::ambient: return "ambient";
    case Channel::load_factor: return "load_factor";
    case Channel::temp_rise: return "temp_rise";
  }
  return "?";
}

Channel channel_from_name(std::string_view name) {
  for (Channel c : {Channel::top_oil, Channel::ambient, Channel::load_factor, Channel::temp_rise}) {
    if (channel_name(c) == name) return c;
  }
  throw ValidationError("unknown channel '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// TransformerDataset

TransformerDataset TransformerDataset::from_channels(const TimeSeries& top_oil, const TimeSeries& ambient,
                                                     const TimeSeries& load_factor) {
  for (const TimeSeries* s : {&top_oil, &ambient, &load_factor}) s->validate_regular();
  if (ambient.timestamps != top_oil.timestamps || load_factor.timestamps != top_oil.timestamps) {
    throw ValidationError("dataset channels do not share one timestamp vector");
  }
  if (ambient.step != top_oil.step || load_factor.step != top_oil.step) {
    throw ValidationError("dataset channels have different steps");
  }
  return from_vectors(top_oil.timestamps, top_oil.step, top_oil.values, ambient.values, load_factor.values);
}

TransformerDataset TransformerDataset::from_vectors(std::vector<Instant> timestamps, std::int64_t step,
                                                    std::vector<double> top_oil, std::vector<double> ambient,
                                                    std::vector<double> load_factor) {
  TransformerDataset ds;
  ds.timestamps_ = std::move(timestamps);
  ds.step_ = step;
  ds.top_oil_ = std::move(top_oil);
  ds.ambient_ = std::move(ambient);
  ds.load_factor_ = std::move(load_factor);
  ds.temp_rise_.resize(ds.top_oil_.size());
  if (ds.ambient_.size() == ds.top_oil_.size()) {
    for (std::size_t i = 0; i < ds.top_oil_.size(); ++i) ds.temp_rise_[i] = ds.top_oil_[i] - ds.ambient_[i];
  }
  ds.check_invariants();
  return ds;
}

void TransformerDataset::check_invariants() const {
  const std::size_t n = timestamps_.size();
  if (top_oil_.size() != n || ambient_.size() != n || load_factor_.size() != n) {
    throw ValidationError("dataset channel lengths differ from timestamp count");
  }
  TimeSeries probe{timestamps_, top_oil_, step_};
  probe.validate_regular();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(ambient_[i]) || !std::isfinite(load_factor_[i])) {
      throw ValidationError("non-finite covariate at index " + std::to_string(i));
    }
    if (load_factor_[i] < 0.0) {
      throw ValidationError("negative load factor at index " + std::to_string(i));
    }
  }
}

const std::vector<double>& TransformerDataset::channel(Channel c) const {
  switch (c) {
    case Channel::top_oil: return top_oil_;
    case Channel::ambient: return ambient_;
    case Channel::load_factor: return load_factor_;
    case Channel::temp_rise: return temp_rise_;
  }
  throw ValidationError("unknown channel");
}

TimeSeries TransformerDataset::series(Channel c) const { return TimeSeries{timestamps_, channel(c), step_}; }

TransformerDataset TransformerDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) {
    throw ValidationError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                          std::to_string(size()) + " rows");
  }
  auto cut = [&](const auto& v) { return std::vector(v.begin() + begin, v.begin() + end); };
  TransformerDataset ds;
  ds.timestamps_ = cut(timestamps_);
  ds.step_ = step_;
  ds.top_oil_ = cut(top_oil_);
  ds.ambient_ = cut(ambient_);
  ds.load_factor_ = cut(load_factor_);
  ds.temp_rise_ = cut(temp_rise_);
  return ds;
}

TransformerDataset TransformerDataset::with_channel(Channel c, std::vector<double> values) const {
  if (values.size() != size()) throw ValidationError("replacement channel has wrong length");
  std::vector<double> top = top_oil_, amb = ambient_, load = load_factor_;
  switch (c) {
    case Channel::top_oil: top = std::move(values); break;
    case Channel::ambient: amb = std::move(values); break;
    case Channel::load_factor: load = std::move(values); break;
    case Channel::temp_rise: throw ValidationError("temp_rise is derived and cannot be replaced");
  }
  return from_vectors(timestamps_, step_, std::move(top), std::move(amb), std::move(load));
}

// ---------------------------------------------------------------------------
// Ingestion and repair

std::map<std::string, TimeSeries> ingest_measurements(const std::filesystem::path& path,
                                                      const std::map<std::string, std::string>& column_map,
                                                      std::int64_t step, int utc_offset_minutes,
                                                      const std::string& timestamp_column) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open measurement file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("measurement file '" + path.string() + "' is empty");
  const auto header = split_csv_line(line);
  auto find_column = [&](std::string_view name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ValidationError("missing column '" + std::string(name) + "' in '" + path.string() + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ts_col = find_column(timestamp_column);
  std::vector<std::pair<std::string, std::size_t>> wanted;
  for (const auto& [series_name, column] : column_map) wanted.emplace_back(series_name, find_column(column));
  if (wanted.empty()) throw ValidationError("no value columns requested from '" + path.string() + "'");

  std::map<std::string, TimeSeries> out;
  for (const auto& [name, col] : wanted) out[name].step = step;
  std::vector<Instant> stamps;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ValidationError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(header.size()));
    }
    Instant t = 0;
    try {
      t = parse_instant(fields[ts_col], utc_offset_minutes);
    } catch (const ValidationError&) {
      throw ValidationError("row " + std::to_string(row) + ": unparseable timestamp '" +
                            std::string(fields[ts_col]) + "'");
    }
    if (!stamps.empty() && t <= stamps.back()) {
      throw ValidationError("row " + std::to_string(row) + ": non-monotonic timestamp " +
                            std::string(fields[ts_col]) + (t == stamps.back() ? " (duplicate)" : ""));
    }
    stamps.push_back(t);
    for (const auto& [name, col] : wanted) {
      const auto field = fields[col];
      double v = kNaN;
      if (!is_missing_token(field)) {
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc{} || ptr != field.data() + field.size()) {
          throw ValidationError("row " + std::to_string(row) + ": unparseable value '" + std::string(field) +
                                "' in column '" + header[col].data() + "'");
        }
      }
      out[name].values.push_back(v);
    }
  }
  for (auto& [name, s] : out) s.timestamps = stamps;
  return out;
}

TimeSeries regularize(const TimeSeries& s, std::int64_t step) {
  s.validate();
  if (step <= 0) throw ValidationError("step must be positive");
  TimeSeries out;
  out.step = step;
  if (s.empty()) return out;
  const Instant origin = s.timestamps.front();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Instant t = s.timestamps[i];
    if ((t - origin) % step != 0) {
      throw ValidationError("timestamp " + format_instant(t) + " is off the " + std::to_string(step) + " s grid");
    }
    if (!out.timestamps.empty()) {
      for (Instant g = out.timestamps.back() + step; g < t; g += step) {
        out.timestamps.push_back(g);
        out.values.push_back(kNaN);
      }
    }
    out.timestamps.push_back(t);
    out.values.push_back(s.values[i]);
  }
  return out;
}

TimeSeries fill_gaps_adjacent_mean(const TimeSeries& s) {
  s.validate();
  TimeSeries out = s;
  if (s.empty()) return out;
  if (std::isnan(s.values.front())) throw ValidationError("first sample is missing; cannot fill without extrapolation");
  if (std::isnan(s.values.back())) throw ValidationError("last sample is missing; cannot fill without extrapolation");
  std::size_t i = 1;
  while (i < out.size()) {
    if (!std::isnan(out.values[i])) {
      ++i;
      continue;
    }
    const std::size_t left = i - 1;
    std::size_t right = i;
    while (std::isnan(out.values[right])) ++right;
    const double a = out.values[left];
    const double b = out.values[right];
    const double span = static_cast<double>(right - left);
    for (std::size_t j = i; j < right; ++j) {
      const double w = static_cast<double>(j - left) / span;
      // A single gap reduces to (a + b) / 2.
      out.values[j] = right - left == 2 ? 0.5 * (a + b) : a + w * (b - a);
    }
    i = right + 1;
  }
  return out;
}

TimeSeries resample_ambient_linear(const TimeSeries& hourly, const std::vector<Instant>& grid,
                                   std::int64_t grid_step) {
  hourly.validate();
  if (hourly.has_missing()) throw ValidationError("hourly ambient series has missing values");
  TimeSeries out;
  out.step = grid_step;
  out.timestamps = grid;
  out.values.reserve(grid.size());
  if (grid.empty()) return out;
  if (hourly.empty()) throw ValidationError("hourly ambient series is empty");
  const auto& ht = hourly.timestamps;
  for (Instant t : grid) {
    if (t < ht.front() || t > ht.back()) {
      throw ValidationError("grid instant " + format_instant(t) + " outside ambient range [" +
                            format_instant(ht.front()) + ", " + format_instant(ht.back()) + "]");
    }
    const auto it = std::lower_bound(ht.begin(), ht.end(), t);
    const auto k = static_cast<std::size_t>(it - ht.begin());
    if (*it == t) {
      out.values.push_back(hourly.values[k]);
      continue;
    }
    const double t0 = static_cast<double>(ht[k - 1]);
    const double t1 = static_cast<double>(ht[k]);
    const double w = (static_cast<double>(t) - t0) / (t1 - t0);
    out.values.push_back(hourly.values[k - 1] + w * (hourly.values[k] - hourly.values[k - 1]));
  }
  return out;
}

TimeSeries derive_load_factor(const TimeSeries& current, double rated_current) {
  if (!(rated_current > 0.0)) throw ValidationError("rated current must be positive");
  TimeSeries out = current;
  for (double& v : out.values) v /= rated_current;
  return out;
}

std::pair<TransformerDataset, TransformerDataset> split(const TransformerDataset& ds, const SplitSpec& spec) {
  if (spec.train_end < spec.train_start) throw ValidationError("training range is empty");
  if (spec.valid_end < spec.valid_start) throw ValidationError("validation range is empty");
  if (!(spec.train_end < spec.valid_start)) {
    throw ValidationError("training range must end strictly before validation starts");
  }
  if (ds.size() == 0) throw ValidationError("cannot split an empty dataset");
  const auto& t = ds.timestamps();
  if (spec.train_start < t.front() || spec.valid_end > t.back()) {
    throw ValidationError("split ranges exceed dataset span [" + format_instant(t.front()) + ", " +
                          format_instant(t.back()) + "]");
  }
  auto locate = [&](Instant a, Instant b, const char* what) {
    const auto lo = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), a) - t.begin());
    const auto hi = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), b) - t.begin());
    if (lo >= hi) throw ValidationError(std::string(what) + " range contains no samples");
    return std::pair{lo, hi};
  };
  const auto [tl, th] = locate(spec.train_start, spec.train_end, "training");
  const auto [vl, vh] = locate(spec.valid_start, spec.valid_end, "validation");
  return {ds.slice(tl, th), ds.slice(vl, vh)};
}

// ---------------------------------------------------------------------------
// Scaling and windowing

void AffineScaler::set(Channel c, double gain, double offset) {
  if (gain == 0.0 || !std::isfinite(gain) || !std::isfinite(offset)) {
    throw ValidationError("scaler for " + std::string(channel_name(c)) + " needs a finite nonzero gain");
  }
  entries_[c] = Affine{gain, offset};
}

AffineScaler::Affine AffineScaler::get(Channel c) const {
  const auto it = entries_.find(c);
  return it == entries_.end() ? Affine{} : it->second;
}

double AffineScaler::scale(Channel c, double x) const {
  const Affine a = get(c);
  return a.gain * x + a.offset;
}

double AffineScaler::unscale(Channel c, double y) const {
  const Affine a = get(c);
  return (y - a.offset) / a.gain;
}

std::size_t lookback_steps(double hours, std::int64_t step) {
  const double steps = hours * 3600.0 / static_cast<double>(step);
  const double rounded = std::round(steps);
  if (rounded < 1.0 || std::abs(steps - rounded) > 1e-9) {
    throw ValidationError("look-back of " + std::to_string(hours) + " h is not a whole number of steps");
  }
  return static_cast<std::size_t>(rounded);
}

WindowSet make_windows(const TransformerDataset& ds, const WindowSpec& spec, const AffineScaler& scaler) {
  const std::size_t n = ds.size();
  const std::size_t L = spec.lookback;
  const std::size_t H = spec.horizon;
  if (L == 0 || H == 0) throw ValidationError("look-back and horizon must be positive");
  if (spec.targets.empty()) throw ValidationError("at least one target channel is required");
  if (n < L + H) {
    throw ValidationError("series of " + std::to_string(n) + " samples is shorter than look-back + horizon (" +
                          std::to_string(L + H) + ")");
  }
  WindowSet w;
  w.n_windows = n - L - H + 1;
  w.lookback = L;
  w.horizon = H;
  w.n_targets = spec.targets.size();
  w.n_covariates = spec.covariates.size();
  const std::size_t C = spec.n_channels();

  std::vector<Channel> order = spec.targets;
  order.insert(order.end(), spec.covariates.begin(), spec.covariates.end());
  std::vector<std::vector<double>> scaled(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto& raw = ds.channel(order[c]);
    scaled[c].resize(n);
    for (std::size_t i = 0; i < n; ++i) scaled[c][i] = scaler.scale(order[c], raw[i]);
  }

  w.inputs.resize(w.n_windows * L * C);
  w.future_covariates.resize(w.n_windows * H * w.n_covariates);
  w.targets.resize(w.n_windows * H * w.n_targets);
  w.input_end_times.resize(w.n_windows);
  w.target_start_times.resize(w.n_windows);
  for (std::size_t i = 0; i < w.n_windows; ++i) {
    double* in = &w.inputs[i * L * C];
    for (std::size_t s = 0; s < L; ++s)
      for (std::size_t c = 0; c < C; ++c) in[s * C + c] = scaled[c][i + s];
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t k = 0; k < w.n_covariates; ++k)
        w.future_covariates[(i * H + h) * w.n_covariates + k] = scaled[w.n_targets + k][i + L + h];
      for (std::size_t k = 0; k < w.n_targets; ++k) w.targets[(i * H + h) * w.n_targets + k] = scaled[k][i + L + h];
    }
    w.input_end_times[i] = ds.timestamps()[i + L - 1];
    w.target_start_times[i] = ds.timestamps()[i + L];
  }
  return w;
}

}  // namespace toilcast
