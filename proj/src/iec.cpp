#include "toilcast/iec.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "toilcast/errors.hpp"

namespace toilcast::iec {

void IecParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string("IEC parameter ") + name + " must be positive and finite");
    }
  };
  positive(psi, "psi");
  positive(delta_t_or, "delta_t_or");
  positive(chi, "chi");
  positive(k11, "k11");
  positive(tau_o, "tau_o");
  positive(tau_w, "tau_w");
  if (chi > 2.0) throw ValidationError("IEC parameter chi must lie in (0, 2]");
}

IecParams params_from_json(const nlohmann::json& j, const std::string& where) {
  auto get = [&](const char* key) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_number()) {
      throw ValidationError(where + " lacks numeric key '" + key + "'");
    }
    return j[key].get<double>();
  };
  IecParams p{get("psi"), get("delta_t_or_k"), get("chi"), get("k11"), get("tau_o_min"), get("tau_w_min")};
  p.validate();
  return p;
}

nlohmann::json params_to_json(const IecParams& p) {
  return {{"psi", p.psi}, {"delta_t_or_k", p.delta_t_or}, {"chi", p.chi},
          {"k11", p.k11}, {"tau_o_min", p.tau_o},         {"tau_w_min", p.tau_w}};
}

IecParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open IEC parameter file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("IEC parameter file '" + path.string() + "': " + e.what());
  }
  return params_from_json(j, "IEC parameter file '" + path.string() + "'");
}

void save_params(const IecParams& p, const std::filesystem::path& path) {
  nlohmann::json j = params_to_json(p);
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write IEC parameter file '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

double loss_ratio_power(double load_factor, const IecParams& p) {
  return std::pow((1.0 + load_factor * load_factor * p.psi) / (1.0 + p.psi), p.chi);
}

double steady_state(double load_factor, double t_ambient, const IecParams& p) {
  if (load_factor < 0.0) throw ValidationError("load factor must be non-negative");
  return t_ambient + p.delta_t_or * loss_ratio_power(load_factor, p);
}

double step(double t_prev, double load_factor, double t_ambient, double dt_min, const IecParams& p) {
  if (dt_min < 0.0) throw ValidationError("time step must be non-negative");
  const double drive = loss_ratio_power(load_factor, p) * p.delta_t_or - (t_prev - t_ambient);
  return t_prev + dt_min / (p.k11 * p.tau_o) * drive;
}

bool check_timestep(double dt_min, const IecParams& p) { return dt_min > 0.0 && dt_min <= 0.5 * p.tau_w; }

std::vector<double> simulate(std::span<const double> load_factor, std::span<const double> t_ambient, double t0,
                             double series_step_min, double dt_min, const IecParams& p,
                             const SimulateOptions& opts) {
  p.validate();
  if (load_factor.size() != t_ambient.size()) {
    throw ValidationError("load factor and ambient series are misaligned (" + std::to_string(load_factor.size()) +
                          " vs " + std::to_string(t_ambient.size()) + " samples)");
  }
  if (!(dt_min > 0.0)) throw ValidationError("time step must be positive");
  if (!opts.allow_coarse_step && !check_timestep(dt_min, p)) {
    throw ValidationError("time step " + std::to_string(dt_min) + " min exceeds half the winding time constant (" +
                          std::to_string(0.5 * p.tau_w) + " min)");
  }
  const double ratio = series_step_min / dt_min;
  const double substeps_real = std::round(ratio);
  if (substeps_real < 1.0 || std::abs(ratio - substeps_real) > 1e-9 * ratio) {
    throw ValidationError("time step must divide the series step");
  }
  const auto substeps = static_cast<std::size_t>(substeps_real);

  std::vector<double> out;
  if (load_factor.empty()) return out;
  out.reserve(load_factor.size());
  double t_oil = t0;
  out.push_back(t_oil);
  for (std::size_t i = 1; i < load_factor.size(); ++i) {
    for (std::size_t s = 0; s < substeps; ++s) t_oil = step(t_oil, load_factor[i - 1], t_ambient[i - 1], dt_min, p);
    out.push_back(t_oil);
  }
  return out;
}

TimeSeries simulate(const TimeSeries& load_factor, const TimeSeries& t_ambient, double t0, double dt_min,
                    const IecParams& p, const SimulateOptions& opts) {
  if (load_factor.timestamps != t_ambient.timestamps) {
    throw ValidationError("load factor and ambient series have different timestamps");
  }
  load_factor.validate_regular();
  t_ambient.validate_regular();
  TimeSeries out;
  out.timestamps = load_factor.timestamps;
  out.step = load_factor.step;
  out.values = simulate(load_factor.values, t_ambient.values, t0, static_cast<double>(load_factor.step) / 60.0, dt_min,
                        p, opts);
  return out;
}

}  // namespace toilcast::iec
