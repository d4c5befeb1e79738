#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "toilcast/series.hpp"

namespace toilcast::iec {

/// Top-oil thermal constants for an ONAN transformer (IEC 60076-7).
struct IecParams {
  double psi = 0.0;          ///< load losses at rated current / no-load losses [-]
  double delta_t_or = 0.0;   ///< top-oil rise at rated losses [K]
  double chi = 0.0;          ///< oil exponent [-]
  double k11 = 0.0;          ///< thermal model constant [-]
  double tau_o = 0.0;        ///< oil time constant [min]
  double tau_w = 0.0;        ///< smallest winding time constant [min]

  /// Throws ValidationError unless all fields are positive and chi <= 2.
  void validate() const;
};

/// Reads the JSON parameter file (keys psi, delta_t_or_k, chi, k11,
/// tau_o_min, tau_w_min).
IecParams load_params(const std::filesystem::path& path);
/// Keys psi, delta_t_or_k, chi, k11, tau_o_min, tau_w_min. `where` prefixes errors.
IecParams params_from_json(const nlohmann::json& j, const std::string& where = "IEC parameters");
nlohmann::json params_to_json(const IecParams& p);
void save_params(const IecParams& p, const std::filesystem::path& path);

struct IecState {
  double t_oil = 0.0;  ///< [°C]
  Instant t = 0;
};

/// Ultimate top-oil rise factor [(1 + K²Ψ)/(1 + Ψ)]^χ.
double loss_ratio_power(double load_factor, const IecParams& p);

/// Top-oil temperature at which dT_o/dt vanishes.
double steady_state(double load_factor, double t_ambient, const IecParams& p);

/// One explicit Euler step of `dt_min` minutes with K and Ta held constant.
double step(double t_prev, double load_factor, double t_ambient, double dt_min, const IecParams& p);

/// True iff dt <= τ_w / 2.
bool check_timestep(double dt_min, const IecParams& p);

struct SimulateOptions {
  /// Skip the dt <= τ_w/2 rule.
  bool allow_coarse_step = false;
};

/// Integrates over samples spaced `series_step_min` apart using sub-steps of
/// `dt_min`, holding the sample-start K and Ta over each interval. Element 0
/// is `t0`; element i is the temperature at sample i.
std::vector<double> simulate(std::span<const double> load_factor, std::span<const double> t_ambient, double t0,
                             double series_step_min, double dt_min, const IecParams& p,
                             const SimulateOptions& opts = {});

TimeSeries simulate(const TimeSeries& load_factor, const TimeSeries& t_ambient, double t0, double dt_min,
                    const IecParams& p, const SimulateOptions& opts = {});

}  // namespace toilcast::iec
