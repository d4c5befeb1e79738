#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "toilcast/errors.hpp"
#include "toilcast/series.hpp"

using namespace toilcast;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::filesystem::path write_file(const std::string& name, const std::string& body) {
  auto dir = std::filesystem::temp_directory_path() / "toilcast_test_series";
  std::filesystem::create_directories(dir);
  auto p = dir / name;
  std::ofstream(p) << body;
  return p;
}

TimeSeries regular(std::vector<double> v, Instant t0 = 0, std::int64_t step = kFiveMinutes) {
  TimeSeries s;
  s.step = step;
  for (std::size_t i = 0; i < v.size(); ++i) s.timestamps.push_back(t0 + static_cast<Instant>(i) * step);
  s.values = std::move(v);
  return s;
}

TransformerDataset ramp(std::size_t n) {
  std::vector<Instant> t;
  std::vector<double> a, b, c;
  for (std::size_t i = 0; i < n; ++i) {
    t.push_back(static_cast<Instant>(i) * kFiveMinutes);
    a.push_back(40.0 + static_cast<double>(i));
    b.push_back(20.0 - 0.5 * static_cast<double>(i));
    c.push_back(0.5 + 0.01 * static_cast<double>(i));
  }
  return TransformerDataset::from_vectors(t, kFiveMinutes, a, b, c);
}

}  // namespace

TEST_CASE("instants parse in UTC and with offsets") {
  CHECK(parse_instant("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_instant("2020-07-01 00:00") == 1593561600);
  CHECK(parse_instant("2020-07-01T02:00:00+02:00") == 1593561600);
  CHECK(parse_instant("2020-07-01T01:00", 60) == 1593561600);
  CHECK(format_instant(1593561600) == "2020-07-01T00:00:00Z");
  CHECK(parse_utc_offset("-05:30") == -330);
  CHECK_THROWS_AS(parse_instant("2020-13-01T00:00"), ValidationError);
}

TEST_CASE("ingest reads a small well-formed file") {
  auto p = write_file("three.csv",
                      "timestamp,oil,amps\n"
                      "2020-07-01T00:00:00Z,40.5,100\n"
                      "2020-07-01T00:05:00Z,41,NaN\n"
                      "2020-07-01T00:10:00Z,41.5,120\n");
  auto m = ingest_measurements(p, {{"top_oil", "oil"}, {"current", "amps"}});
  REQUIRE(m.at("top_oil").size() == 3);
  CHECK(m.at("top_oil").values == std::vector<double>{40.5, 41.0, 41.5});
  CHECK(std::isnan(m.at("current").values[1]));
  CHECK(m.at("current").values[2] == 120.0);
}

TEST_CASE("ingest rejects duplicates, missing columns and missing files") {
  auto dup = write_file("dup.csv",
                        "timestamp,oil\n"
                        "2020-07-01T00:00:00Z,40\n"
                        "2020-07-01T00:05:00Z,41\n"
                        "2020-07-01T00:05:00Z,42\n");
  try {
    ingest_measurements(dup, {{"top_oil", "oil"}});
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("2020-07-01T00:05:00Z") != std::string::npos);
  }
  CHECK_THROWS_AS(ingest_measurements(dup, {{"top_oil", "temperature"}}), ValidationError);
  CHECK_THROWS_AS(ingest_measurements("/nonexistent/x.csv", {{"top_oil", "oil"}}), ValidationError);
}

TEST_CASE("190 days at five minutes has 54721 points") {
  std::string body = "timestamp,oil\n";
  const Instant t0 = parse_instant("2020-01-01T00:00:00Z");
  const std::size_t n = 190 * 288 + 1;
  for (std::size_t i = 0; i < n; ++i) body += format_instant(t0 + static_cast<Instant>(i) * kFiveMinutes) + ",50\n";
  auto m = ingest_measurements(write_file("long.csv", body), {{"top_oil", "oil"}});
  CHECK(m.at("top_oil").size() == 54721);
  CHECK_NOTHROW(m.at("top_oil").validate_regular());
}

TEST_CASE("regularize inserts missing samples") {
  TimeSeries s;
  s.timestamps = {0, 300, 900};
  s.values = {1, 2, 4};
  auto r = regularize(s, kFiveMinutes);
  REQUIRE(r.size() == 4);
  CHECK(std::isnan(r.values[2]));
  CHECK(r.timestamps[2] == 600);
}

TEST_CASE("gap filling") {
  CHECK(fill_gaps_adjacent_mean(regular({50, kNaN, 54})).values == std::vector<double>{50, 52, 54});
  CHECK(fill_gaps_adjacent_mean(regular({1, 2, 3})).values == std::vector<double>{1, 2, 3});
  auto run = fill_gaps_adjacent_mean(regular({10, kNaN, kNaN, 16}));
  CHECK(run.values[1] == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(run.values[2] == doctest::Approx(14.0).epsilon(1e-12));
  CHECK_THROWS_AS(fill_gaps_adjacent_mean(regular({kNaN, 1, 2})), ValidationError);
  CHECK_THROWS_AS(fill_gaps_adjacent_mean(regular({1, 2, kNaN})), ValidationError);
}

TEST_CASE("hourly ambient is interpolated linearly") {
  auto hourly = regular({10, 12}, 0, kOneHour);
  auto r = resample_ambient_linear(hourly, {0, 1800, 3600});
  CHECK(r.values[0] == 10.0);
  CHECK(r.values[1] == doctest::Approx(11.0).epsilon(1e-12));
  CHECK(r.values[2] == 12.0);
  auto r2 = resample_ambient_linear(regular({0, 6}, 0, kOneHour), {300});
  CHECK(r2.values[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(resample_ambient_linear(hourly, {3900}), ValidationError);
}

TEST_CASE("load factor from current") {
  auto k = derive_load_factor(regular({400, 0, 500}), 400.0);
  CHECK(k.values == std::vector<double>{1.0, 0.0, 1.25});
  CHECK_THROWS_AS(derive_load_factor(regular({400}), 0.0), ValidationError);
}

TEST_CASE("dataset derives temperature rise") {
  auto ds = ramp(5);
  for (std::size_t i = 0; i < ds.size(); ++i)
    CHECK(ds.channel(Channel::temp_rise)[i] ==
          doctest::Approx(ds.channel(Channel::top_oil)[i] - ds.channel(Channel::ambient)[i]).epsilon(1e-12));
  CHECK(channel_from_name("load_factor") == Channel::load_factor);
  CHECK_THROWS_AS(channel_from_name("voltage"), ValidationError);
}

TEST_CASE("split counts") {
  auto ds = ramp(10);
  SplitSpec s{0, 6 * kFiveMinutes, 7 * kFiveMinutes, 9 * kFiveMinutes};
  auto [tr, va] = split(ds, s);
  CHECK(tr.size() == 7);
  CHECK(va.size() == 3);
  CHECK_THROWS_AS(split(ds, SplitSpec{0, 9 * kFiveMinutes, 10 * kFiveMinutes, 12 * kFiveMinutes}), ValidationError);
  CHECK_THROWS_AS(split(ds, SplitSpec{0, 6 * kFiveMinutes, 5 * kFiveMinutes, 9 * kFiveMinutes}), ValidationError);
}

TEST_CASE("42/18 day split of a 60 day series") {
  auto ds = ramp(60 * 288 + 1);
  const Instant train_end = 42 * kOneDay;
  auto [tr, va] = split(ds, SplitSpec{0, train_end, train_end + kFiveMinutes, 60 * kOneDay});
  CHECK(tr.size() == 42 * 288 + 1);
  CHECK(tr.size() == 12097);
  CHECK(va.size() == 18 * 288);
  CHECK(tr.size() + va.size() == ds.size());
}

TEST_CASE("window counts and alignment") {
  auto ds = ramp(10);
  WindowSpec spec;
  spec.lookback = 3;
  auto w = make_windows(ds, spec);
  CHECK(w.n_windows == 7);
  spec.lookback = 9;
  CHECK(make_windows(ds, spec).n_windows == 1);
  spec.lookback = 10;
  CHECK_THROWS_AS(make_windows(ds, spec), ValidationError);
  CHECK(lookback_steps(2) == 24);
  CHECK(lookback_steps(4) == 48);
  CHECK(lookback_steps(8) == 96);

  spec.lookback = 3;
  for (std::size_t i = 0; i < w.n_windows; ++i) {
    CHECK(w.target_start_times[i] == w.input_end_times[i] + kFiveMinutes);
    CHECK(w.targets[i] == ds.channel(Channel::top_oil)[i + 3]);
    CHECK(w.inputs[i * 9 + 0] == ds.channel(Channel::top_oil)[i]);
    CHECK(w.inputs[i * 9 + 1] == ds.channel(Channel::ambient)[i]);
    CHECK(w.inputs[i * 9 + 2] == ds.channel(Channel::load_factor)[i]);
    CHECK(w.future_covariates[i * 2 + 0] == ds.channel(Channel::ambient)[i + 3]);
  }
}

TEST_CASE("scaler round trip and windows in scaled units") {
  AffineScaler s;
  s.set(Channel::top_oil, 0.05, -2.0);
  for (double x : {-40.0, 0.0, 12.345, 95.0, 1e6}) CHECK(std::abs(s.unscale(Channel::top_oil, s.scale(Channel::top_oil, x)) - x) <= 1e-9 * std::max(1.0, std::abs(x)));
  CHECK(s.scale(Channel::load_factor, 0.7) == 0.7);
  CHECK_THROWS_AS(s.set(Channel::ambient, 0.0, 1.0), ValidationError);

  auto ds = ramp(6);
  WindowSpec spec;
  spec.lookback = 2;
  auto w = make_windows(ds, spec, s);
  CHECK(w.targets[0] == doctest::Approx(0.05 * 42.0 - 2.0));
}
