#include "toilcast/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include "toilcast/errors.hpp"

namespace toilcast::checkpoint {

using nlohmann::json;

namespace {

json channels_json(const std::vector<Channel>& cs) {
  json a = json::array();
  for (Channel c : cs) a.push_back(std::string(channel_name(c)));
  return a;
}

std::vector<Channel> channels_from(const json& a) {
  std::vector<Channel> out;
  for (const auto& v : a) out.push_back(channel_from_name(v.get<std::string>()));
  return out;
}

}  // namespace

json to_json(const Checkpoint& c) {
  json scaling = json::object();
  for (const auto& [channel, a] : c.scaler.entries())
    scaling[std::string(channel_name(channel))] = {{"gain", a.gain}, {"offset", a.offset}};

  json params = json::array();
  for (const nn::Parameter& p : c.model.params()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape}, {"data", p.value.data}});
  }
  return {{"format", kFormat},
          {"version", kVersion},
          {"family", models::family_name(c.model.family())},
          {"config", models::config_to_json(c.model.config())},
          {"quantiles", c.model.quantiles().alphas},
          {"targets", channels_json(c.window.targets)},
          {"covariates", channels_json(c.window.covariates)},
          {"lookback", c.window.lookback},
          {"horizon", c.window.horizon},
          {"scaling", scaling},
          {"config_hash", c.config_hash},
          {"data_hash", c.data_hash},
          {"checksum", c.checksum()},
          {"parameters", params}};
}

Checkpoint from_json(const json& j) {
  try {
    if (j.value("format", "") != kFormat) throw ValidationError("not a toilcast checkpoint");
    if (j.at("version").get<int>() != kVersion) {
      throw ValidationError("unsupported checkpoint version " + j.at("version").dump());
    }
    const models::Family family = models::family_from_name(j.at("family").get<std::string>());
    models::Model model(models::config_from_json(family, j.at("config")));

    WindowSpec window;
    window.targets = channels_from(j.at("targets"));
    window.covariates = channels_from(j.at("covariates"));
    window.lookback = j.at("lookback").get<std::size_t>();
    window.horizon = j.at("horizon").get<std::size_t>();
    if (window.lookback != model.lookback() || window.horizon != model.horizon() ||
        window.targets.size() != model.n_targets() || window.covariates.size() != model.n_covariates()) {
      throw ValidationError("checkpoint window does not match its model config");
    }

    AffineScaler scaler;
    for (const auto& [name, a] : j.at("scaling").items())
      scaler.set(channel_from_name(name), a.at("gain").get<double>(), a.at("offset").get<double>());

    nn::ParameterSet& ps = model.params();
    const json& params = j.at("parameters");
    if (params.size() != ps.size()) {
      throw ValidationError("checkpoint has " + std::to_string(params.size()) + " parameters, model expects " +
                            std::to_string(ps.size()));
    }
    for (const auto& p : params) {
      const std::string name = p.at("name").get<std::string>();
      nn::Parameter& target = ps[ps.index_of(name)];
      const auto shape = p.at("shape").get<nn::Shape>();
      if (shape != target.value.shape) {
        throw ValidationError("parameter '" + name + "' has shape " + nn::shape_string(shape) + ", expected " +
                              nn::shape_string(target.value.shape));
      }
      auto data = p.at("data").get<std::vector<double>>();
      if (data.size() != target.value.numel()) throw ValidationError("parameter '" + name + "' has the wrong size");
      for (double v : data) {
        if (!std::isfinite(v)) throw ValidationError("parameter '" + name + "' holds a non-finite value");
      }
      target.value.data = std::move(data);
    }

    Checkpoint c{std::move(model), std::move(window), std::move(scaler), j.value("config_hash", ""),
                 j.value("data_hash", "")};
    if (j.contains("checksum") && j.at("checksum").get<std::string>() != c.checksum()) {
      throw ValidationError("checkpoint checksum mismatch");
    }
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << to_json(c).dump() << '\n';
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse checkpoint '" + path.string() + "': " + e.what());
  }
  return from_json(j);
}

}  // namespace toilcast::checkpoint
