#include "toilcast/run_config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include "toilcast/errors.hpp"
#include "toilcast/rng.hpp"

namespace toilcast::config {

using nlohmann::json;

namespace {

const std::set<std::string> kTopLevelKeys{"seed",    "output_dir", "data",       "split",      "scaling",
                                          "targets", "covariates", "quantiles",  "models",     "train",
                                          "grid",    "iec_params", "iec_dt_min", "allow_coarse_step"};

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError("missing key '" + path + "'");
  return j.at(key);
}

template <class T>
T get_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + path + "' has the wrong type");
  }
}

template <class T>
void read(const json& j, const std::string& key, const std::string& prefix, T& out) {
  if (j.is_object() && j.contains(key)) out = get_as<T>(j.at(key), prefix + key);
}

Instant read_instant(const json& j, const std::string& key, const std::string& prefix, int offset) {
  const json& v = require(j, key, prefix + key);
  if (v.is_number_integer()) return v.get<Instant>();
  return parse_instant(get_as<std::string>(v, prefix + key), offset);
}

std::vector<Channel> read_channels(const json& j, const std::string& key) {
  std::vector<Channel> out;
  for (const auto& v : get_as<std::vector<std::string>>(j, key)) out.push_back(channel_from_name(v));
  return out;
}

synth::SynthSpec read_synth(const json& j, const RunConfig& cfg) {
  synth::SynthSpec s;
  s.seed = cfg.seed;
  const std::string p = "data.synth.";
  read(j, "days", p, s.days);
  read(j, "seed", p, s.seed);
  if (j.contains("start")) s.start = read_instant(j, "start", p, 0);
  read(j, "measurement_sigma", p, s.measurement_sigma);
  read(j, "tau_load_coeff", p, s.tau_load_coeff);
  if (j.contains("load")) {
    const json& l = j.at("load");
    const std::string q = p + "load.";
    read(l, "mean", q, s.load.mean);
    read(l, "diurnal_amplitude", q, s.load.diurnal_amplitude);
    read(l, "peak_hour", q, s.load.peak_hour);
    read(l, "weekly_amplitude", q, s.load.weekly_amplitude);
    read(l, "noise_sigma", q, s.load.noise_sigma);
  }
  if (j.contains("ambient")) {
    const json& a = j.at("ambient");
    const std::string q = p + "ambient.";
    read(a, "mean", q, s.ambient.mean);
    read(a, "diurnal_amplitude", q, s.ambient.diurnal_amplitude);
    read(a, "peak_hour", q, s.ambient.peak_hour);
    read(a, "ar_coefficient", q, s.ambient.ar_coefficient);
    read(a, "noise_sigma", q, s.ambient.noise_sigma);
  }
  // Generator constants: inline object, a file path, or the run's IEC file.
  if (j.contains("iec_params")) {
    const json& v = j.at("iec_params");
    if (v.is_object()) {
      s.iec = iec::params_from_json(v, "data.synth.iec_params");
    } else {
      s.iec = iec::load_params(cfg.resolve(get_as<std::string>(v, p + "iec_params")));
    }
  } else if (cfg.iec_params) {
    s.iec = iec::load_params(*cfg.iec_params);
  } else {
    throw ValidationError("missing key 'data.synth.iec_params'");
  }
  s.validate();
  return s;
}

FileSource read_files(const json& j, const RunConfig& cfg) {
  FileSource f;
  const std::string p = "data.files.";
  f.measurements = cfg.resolve(get_as<std::string>(require(j, "measurements", p + "measurements"), p + "measurements"));
  f.ambient = cfg.resolve(get_as<std::string>(require(j, "ambient", p + "ambient"), p + "ambient"));
  if (j.contains("utc_offset")) f.utc_offset_minutes = parse_utc_offset(get_as<std::string>(j.at("utc_offset"), p + "utc_offset"));
  read(j, "timestamp_column", p, f.timestamp_column);
  read(j, "top_oil_column", p, f.top_oil_column);
  read(j, "load_column", p, f.load_column);
  read(j, "ambient_column", p, f.ambient_column);
  if (j.contains("rated_current")) {
    f.rated_current = get_as<double>(j.at("rated_current"), p + "rated_current");
    if (!(*f.rated_current > 0.0)) throw ValidationError("data.files.rated_current must be positive");
  }
  return f;
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::string RunConfig::hash() const {
  json j = raw;
  j["seed"] = seed;
  j.erase("output_dir");
  return hash_hex(j.dump());
}

std::string RunConfig::data_hash() const {
  json j{{"data", raw.value("data", json())},
         {"split", raw.value("split", json())},
         {"scaling", raw.value("scaling", json())},
         {"targets", raw.value("targets", json())},
         {"covariates", raw.value("covariates", json())}};
  if (synth) j["synth_seed"] = synth->seed;
  return hash_hex(j.dump());
}

models::ModelConfig RunConfig::model_config(models::Family family, bool quantile) const {
  const std::string name = models::family_name(family);
  json j = json::object();
  if (raw.contains("models") && raw.at("models").contains(name)) j = raw.at("models").at(name);
  if (!j.is_object()) throw ValidationError("config key 'models." + name + "' must be an object");
  j["n_targets"] = targets.size();
  j["n_covariates"] = covariates.size();
  j["quantiles"] = quantile ? quantiles : std::vector<double>{};
  return models::config_from_json(family, j);
}

trainer::TrainConfig RunConfig::train_config(models::Family family, bool quantile) const {
  trainer::TrainConfig c = trainer::reference_defaults(family, quantile);
  c.loss = quantile ? metrics::LossKind::quantile(quantiles) : metrics::LossKind::point();
  c.seed = seed;
  const std::string name = models::family_name(family);
  if (raw.contains("train") && raw.at("train").contains(name)) {
    const json& t = raw.at("train").at(name);
    const std::string p = "train." + name + ".";
    read(t, "batch_size", p, c.batch_size);
    read(t, "max_epochs", p, c.max_epochs);
    read(t, "learning_rate", p, c.learning_rate);
    read(t, "patience", p, c.patience);
    if (t.contains("optimizer")) {
      const auto opt = get_as<std::string>(t.at("optimizer"), p + "optimizer");
      if (opt == "adam") {
        c.optimizer = trainer::Optimizer::adam;
      } else if (opt == "sgd") {
        c.optimizer = trainer::Optimizer::sgd;
      } else {
        throw ValidationError("unknown optimizer '" + opt + "'");
      }
    }
  }
  c.validate();
  return c;
}

trainer::GridSpec RunConfig::grid_spec(models::Family family) const {
  const std::string name = models::family_name(family);
  const json& g = require(require(raw, "grid", "grid"), name, "grid." + name);
  if (g.is_string()) {
    if (g.get<std::string>() != "standard") throw ValidationError("grid." + name + " must be \"standard\" or an object");
    return trainer::GridSpec::standard(family);
  }
  if (!g.is_object()) throw ValidationError("grid." + name + " must be \"standard\" or an object");
  trainer::GridSpec spec;
  spec.family = family;
  for (const auto& [key, vals] : g.items()) {
    if (key == "lookbacks") {
      spec.lookbacks = get_as<std::vector<std::size_t>>(vals, "grid." + name + ".lookbacks");
      continue;
    }
    if (!vals.is_array()) throw ValidationError("grid." + name + "." + key + " must be a list");
    spec.values[key] = vals.get<std::vector<json>>();
  }
  if (spec.trial_count() == 0) throw ValidationError("grid." + name + " is empty");
  return spec;
}

WindowSpec RunConfig::window_spec(std::size_t lookback, std::size_t horizon) const {
  WindowSpec w;
  w.targets = targets;
  w.covariates = covariates;
  w.lookback = lookback;
  w.horizon = horizon;
  return w;
}

iec::IecParams RunConfig::load_iec_params() const {
  if (!iec_params) throw ValidationError("missing key 'iec_params'");
  return iec::load_params(*iec_params);
}

RunConfig from_json(const json& j, std::filesystem::path base_dir) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (!kTopLevelKeys.count(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  RunConfig cfg;
  cfg.raw = j;
  cfg.base_dir = std::move(base_dir);
  read(j, "seed", "", cfg.seed);
  if (const char* env = std::getenv("TOILCAST_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ValidationError(std::string("TOILCAST_SEED is not an integer: '") + env + "'");
    cfg.seed = v;
  }
  if (j.contains("output_dir")) cfg.output_dir = cfg.resolve(get_as<std::string>(j.at("output_dir"), "output_dir"));
  if (j.contains("iec_params")) cfg.iec_params = cfg.resolve(get_as<std::string>(j.at("iec_params"), "iec_params"));
  read(j, "iec_dt_min", "", cfg.iec_dt_min);
  read(j, "allow_coarse_step", "", cfg.allow_coarse_step);
  if (j.contains("targets")) cfg.targets = read_channels(j.at("targets"), "targets");
  if (j.contains("covariates")) cfg.covariates = read_channels(j.at("covariates"), "covariates");
  if (cfg.targets.empty()) throw ValidationError("config needs at least one target");
  for (Channel c : cfg.covariates) {
    if (std::find(cfg.targets.begin(), cfg.targets.end(), c) != cfg.targets.end()) {
      throw ValidationError("channel '" + std::string(channel_name(c)) + "' is both a target and a covariate");
    }
  }
  read(j, "quantiles", "", cfg.quantiles);
  metrics::LossKind::quantile(cfg.quantiles).validate();

  if (j.contains("scaling")) {
    for (const auto& [name, a] : j.at("scaling").items()) {
      const std::string p = "scaling." + name + ".";
      double gain = 1.0, offset = 0.0;
      read(a, "gain", p, gain);
      read(a, "offset", p, offset);
      if (!std::isfinite(gain) || gain == 0.0) throw ValidationError("scaling gain for '" + name + "' must be nonzero");
      cfg.scaler.set(channel_from_name(name), gain, offset);
    }
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    const bool has_synth = d.contains("synth"), has_files = d.contains("files");
    if (has_synth == has_files) throw ValidationError("data must contain exactly one of 'synth' or 'files'");
    if (has_synth) cfg.synth = read_synth(d.at("synth"), cfg);
    if (has_files) cfg.files = read_files(d.at("files"), cfg);
  }

  if (j.contains("split")) {
    const json& s = j.at("split");
    if (s.contains("train_days") || s.contains("valid_days")) {
      SplitDays days;
      days.train_days = get_as<double>(require(s, "train_days", "split.train_days"), "split.train_days");
      days.valid_days = get_as<double>(require(s, "valid_days", "split.valid_days"), "split.valid_days");
      if (!(days.train_days > 0.0) || !(days.valid_days > 0.0)) throw ValidationError("split days must be positive");
      cfg.split_days = days;
    } else {
      const int offset = cfg.files ? cfg.files->utc_offset_minutes : 0;
      SplitSpec sp;
      sp.train_start = read_instant(s, "train_start", "split.", offset);
      sp.train_end = read_instant(s, "train_end", "split.", offset);
      sp.valid_start = read_instant(s, "valid_start", "split.", offset);
      sp.valid_end = read_instant(s, "valid_end", "split.", offset);
      cfg.split = sp;
    }
  }
  if (!(cfg.iec_dt_min > 0.0)) throw ValidationError("iec_dt_min must be positive");
  return cfg;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse config '" + path.string() + "': " + e.what());
  }
  return from_json(j, path.parent_path());
}

TransformerDataset load_dataset(const RunConfig& cfg) {
  if (cfg.synth) return synth::gen_dataset(*cfg.synth).data;
  if (!cfg.files) throw ValidationError("missing key 'data'");
  const FileSource& f = *cfg.files;
  auto m = ingest_measurements(f.measurements, {{"top_oil", f.top_oil_column}, {"load", f.load_column}}, kFiveMinutes,
                               f.utc_offset_minutes, f.timestamp_column);
  TimeSeries top = fill_gaps_adjacent_mean(regularize(m.at("top_oil"), kFiveMinutes));
  TimeSeries load = fill_gaps_adjacent_mean(regularize(m.at("load"), kFiveMinutes));
  if (f.rated_current) load = derive_load_factor(load, *f.rated_current);
  auto a = ingest_measurements(f.ambient, {{"ambient", f.ambient_column}}, kOneHour, f.utc_offset_minutes);
  const TimeSeries hourly = fill_gaps_adjacent_mean(regularize(a.at("ambient"), kOneHour));
  const TimeSeries ambient = resample_ambient_linear(hourly, top.timestamps, kFiveMinutes);
  return TransformerDataset::from_channels(top, ambient, load);
}

std::pair<TransformerDataset, TransformerDataset> split_dataset(const RunConfig& cfg, const TransformerDataset& ds) {
  if (cfg.split) return split(ds, *cfg.split);
  if (!cfg.split_days) throw ValidationError("missing key 'split'");
  if (ds.size() == 0) throw ValidationError("dataset is empty");
  SplitSpec sp;
  sp.train_start = ds.timestamps().front();
  sp.train_end = sp.train_start + static_cast<Instant>(std::llround(cfg.split_days->train_days * kOneDay));
  sp.valid_start = sp.train_end + ds.step();
  sp.valid_end = sp.train_end + static_cast<Instant>(std::llround(cfg.split_days->valid_days * kOneDay));
  return split(ds, sp);
}

}  // namespace toilcast::config
