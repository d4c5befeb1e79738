#include "toilcast/rolling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "toilcast/errors.hpp"
#include "toilcast/metrics.hpp"
#include "toilcast/synth.hpp"

namespace toilcast::rolling {

NeuralPredictor::NeuralPredictor(models::Model& model, AffineScaler scaler, WindowSpec spec)
    : model_(model), scaler_(std::move(scaler)), spec_(std::move(spec)) {
  if (model_.lookback() != spec_.lookback || model_.n_targets() != spec_.targets.size() ||
      model_.n_covariates() != spec_.covariates.size()) {
    throw ValidationError("model shape does not match the window spec");
  }
  if (model_.quantiles().is_quantile() && !model_.quantiles().median_index()) {
    throw ValidationError("quantile models need an α = 0.5 level for autoregressive feedback");
  }
}

std::vector<double> NeuralPredictor::predict(const StepInput& in) {
  const std::size_t L = spec_.lookback, nt = spec_.targets.size(), r = spec_.covariates.size();
  const std::size_t H = model_.horizon();
  models::ModelInput mi;
  mi.inputs = nn::Tensor({1, L, nt + r});
  for (std::size_t s = 0; s < L; ++s) {
    for (std::size_t k = 0; k < nt; ++k)
      mi.inputs.data[s * (nt + r) + k] = scaler_.scale(spec_.targets[k], in.past_targets[s * nt + k]);
    for (std::size_t k = 0; k < r; ++k)
      mi.inputs.data[s * (nt + r) + nt + k] = scaler_.scale(spec_.covariates[k], in.past_covariates[s * r + k]);
  }
  mi.future_covariates = nn::Tensor({1, H, r});
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t k = 0; k < r; ++k)
      mi.future_covariates.data[h * r + k] = scaler_.scale(spec_.covariates[k], in.future_covariates[k]);

  const std::size_t slots = model_.quantiles().slots();
  std::vector<double> raw = model_.predict(mi);
  raw.resize(nt * slots);  // first horizon step only
  for (std::size_t k = 0; k < nt; ++k)
    for (std::size_t q = 0; q < slots; ++q) raw[k * slots + q] = scaler_.unscale(spec_.targets[k], raw[k * slots + q]);
  return models::enforce_non_crossing(raw, slots);
}

ForecastTrace autoregressive_predict(StepPredictor& model, const TransformerDataset& valid, const WindowSpec& spec,
                                     std::string model_id) {
  const std::size_t N = valid.size();
  const std::size_t L = spec.lookback;
  const std::size_t nt = spec.targets.size(), r = spec.covariates.size();
  if (model.lookback() != L || model.n_targets() != nt) {
    throw ValidationError("predictor '" + model_id + "' does not match the window spec");
  }
  if (N <= L) {
    throw ValidationError("validation slice of " + std::to_string(N) + " samples is not longer than the look-back " +
                          std::to_string(L));
  }
  const std::vector<double> alphas = model.alphas();
  const std::size_t slots = alphas.empty() ? 1 : alphas.size();
  std::size_t feedback_slot = 0;
  if (!alphas.empty()) {
    const auto it = std::find(alphas.begin(), alphas.end(), 0.5);
    if (it == alphas.end()) throw ValidationError("quantile predictor '" + model_id + "' lacks an α = 0.5 level");
    feedback_slot = static_cast<std::size_t>(it - alphas.begin());
  }

  ForecastTrace trace;
  trace.model_id = std::move(model_id);
  trace.targets = spec.targets;
  trace.alphas = alphas;
  trace.predicted.assign(nt, {});
  if (!alphas.empty()) trace.quantiles.assign(nt, std::vector<std::vector<double>>(slots));

  // history[i * nt + k] is target k at row i; rows >= L hold predictions.
  std::vector<double> history(N * nt);
  for (std::size_t k = 0; k < nt; ++k) {
    const auto& measured = valid.channel(spec.targets[k]);
    for (std::size_t i = 0; i < L; ++i) history[i * nt + k] = measured[i];
  }
  std::vector<const std::vector<double>*> covariates;
  for (Channel c : spec.covariates) covariates.push_back(&valid.channel(c));
  std::vector<double> covariate_rows(N * r);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < r; ++k) covariate_rows[i * r + k] = (*covariates[k])[i];

  for (std::size_t i = L; i < N; ++i) {
    StepInput in;
    in.index = i;
    in.past_targets = std::span<const double>(history).subspan((i - L) * nt, L * nt);
    in.past_covariates = std::span<const double>(covariate_rows).subspan((i - L) * r, L * r);
    in.future_covariates = std::span<const double>(covariate_rows).subspan(i * r, r);
    const std::vector<double> out = model.predict(in);
    if (out.size() != nt * slots) {
      throw ValidationError("predictor '" + trace.model_id + "' returned " + std::to_string(out.size()) +
                            " values, expected " + std::to_string(nt * slots));
    }
    for (double v : out) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite prediction from '" + trace.model_id + "' at step " + std::to_string(i) + " (" +
                           format_instant(valid.timestamps()[i]) + ")");
      }
    }
    for (std::size_t k = 0; k < nt; ++k) {
      const double point = out[k * slots + feedback_slot];
      history[i * nt + k] = point;
      trace.predicted[k].push_back(point);
      for (std::size_t q = 0; q < slots && !alphas.empty(); ++q) trace.quantiles[k][q].push_back(out[k * slots + q]);
    }
    trace.timestamps.push_back(valid.timestamps()[i]);
  }
  return trace;
}

ForecastTrace iec_predict(const iec::IecParams& params, const TransformerDataset& valid, double dt_min,
                          std::size_t skip, const iec::SimulateOptions& opts, std::string model_id) {
  if (valid.size() == 0) throw ValidationError("empty validation slice");
  if (skip >= valid.size()) throw ValidationError("IEC trace offset exceeds the validation slice");
  const auto& top = valid.channel(Channel::top_oil);
  const std::vector<double> sim =
      iec::simulate(valid.channel(Channel::load_factor), valid.channel(Channel::ambient), top.front(),
                    static_cast<double>(valid.step()) / 60.0, dt_min, params, opts);
  for (std::size_t i = 0; i < sim.size(); ++i) {
    if (!std::isfinite(sim[i])) throw NumericError("IEC solution is non-finite at step " + std::to_string(i));
  }
  ForecastTrace trace;
  trace.model_id = std::move(model_id);
  trace.targets = {Channel::top_oil};
  trace.timestamps.assign(valid.timestamps().begin() + static_cast<std::ptrdiff_t>(skip), valid.timestamps().end());
  trace.predicted = {std::vector<double>(sim.begin() + static_cast<std::ptrdiff_t>(skip), sim.end())};
  return trace;
}

nlohmann::json EvaluationReport::to_json() const {
  nlohmann::json models_json = nlohmann::json::array();
  for (const ModelMetrics& m : models) {
    nlohmann::json targets = nlohmann::json::object();
    for (const auto& [channel, tm] : m.targets) {
      nlohmann::json t{{"mae", tm.mae}, {"mse", tm.mse}};
      if (tm.picp) t["picp"] = *tm.picp;
      if (tm.mean_width) t["mean_width"] = *tm.mean_width;
      targets[std::string(channel_name(channel))] = t;
    }
    models_json.push_back({{"id", m.model_id}, {"targets", targets}});
  }
  return {{"models", models_json},
          {"metadata",
           {{"config_hash", config_hash},
            {"span_start", format_instant(span_start)},
            {"span_end", format_instant(span_end)},
            {"n_points", n_points}}}};
}

EvaluationReport evaluate(const std::vector<ForecastTrace>& traces, const TransformerDataset& valid,
                          std::string config_hash) {
  if (traces.empty()) throw ValidationError("no traces to evaluate");
  const auto& vt = valid.timestamps();
  for (const ForecastTrace& tr : traces) {
    if (tr.predicted.size() != tr.targets.size()) {
      throw ValidationError("trace '" + tr.model_id + "' has inconsistent target count");
    }
    for (const auto& p : tr.predicted) {
      if (p.size() != tr.timestamps.size()) throw ValidationError("trace '" + tr.model_id + "' is ragged");
    }
    for (Instant t : tr.timestamps) {
      if (!std::binary_search(vt.begin(), vt.end(), t)) {
        throw ValidationError("trace '" + tr.model_id + "' is misaligned with the validation grid at " +
                              format_instant(t));
      }
    }
  }
  std::vector<Instant> common = traces.front().timestamps;
  for (std::size_t k = 1; k < traces.size(); ++k) {
    std::vector<Instant> next;
    std::set_intersection(common.begin(), common.end(), traces[k].timestamps.begin(), traces[k].timestamps.end(),
                          std::back_inserter(next));
    common = std::move(next);
  }
  if (common.empty()) throw ValidationError("traces share no timestamps");

  EvaluationReport report;
  report.config_hash = std::move(config_hash);
  report.span_start = common.front();
  report.span_end = common.back();
  report.n_points = common.size();
  for (const ForecastTrace& tr : traces) {
    const auto offset = static_cast<std::size_t>(
        std::lower_bound(tr.timestamps.begin(), tr.timestamps.end(), common.front()) - tr.timestamps.begin());
    const auto row0 =
        static_cast<std::size_t>(std::lower_bound(vt.begin(), vt.end(), common.front()) - vt.begin());
    const std::size_t M = common.size();
    ModelMetrics mm;
    mm.model_id = tr.model_id;
    for (std::size_t k = 0; k < tr.targets.size(); ++k) {
      const auto& measured = valid.channel(tr.targets[k]);
      const std::span<const double> y(measured.data() + row0, M);
      const std::span<const double> y_hat(tr.predicted[k].data() + offset, M);
      TargetMetrics tm;
      tm.mae = metrics::mae(y, y_hat);
      tm.mse = metrics::mse(y, y_hat);
      if (!std::isfinite(tm.mae) || !std::isfinite(tm.mse)) {
        throw NumericError("metrics for '" + tr.model_id + "' overflow; its trace diverged");
      }
      if (tr.is_quantile()) {
        const auto& lower = tr.quantiles[k].front();
        const auto& upper = tr.quantiles[k].back();
        const auto s = metrics::summarize_interval(y, std::span<const double>(lower.data() + offset, M),
                                                   std::span<const double>(upper.data() + offset, M));
        tm.picp = s.picp;
        tm.mean_width = s.mean_width;
      }
      mm.targets.emplace_back(tr.targets[k], tm);
    }
    report.models.push_back(std::move(mm));
  }
  return report;
}

std::string quantile_label(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "q%02d", static_cast<int>(std::lround(alpha * 100.0)));
  return buf;
}

void write_predictions_csv(const ForecastTrace& trace, const TransformerDataset& valid,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  const auto& vt = valid.timestamps();
  out << "timestamp,measured,predicted";
  for (double a : trace.alphas) out << ',' << quantile_label(a);
  for (std::size_t k = 1; k < trace.targets.size(); ++k) {
    const auto name = channel_name(trace.targets[k]);
    out << ",measured_" << name << ",predicted_" << name;
  }
  out << '\n';
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto row = static_cast<std::size_t>(std::lower_bound(vt.begin(), vt.end(), trace.timestamps[i]) - vt.begin());
    out << format_instant(trace.timestamps[i]) << ',' << synth::format_number(valid.channel(trace.targets[0])[row])
        << ',' << synth::format_number(trace.predicted[0][i]);
    for (std::size_t q = 0; q < trace.alphas.size(); ++q) out << ',' << synth::format_number(trace.quantiles[0][q][i]);
    for (std::size_t k = 1; k < trace.targets.size(); ++k) {
      out << ',' << synth::format_number(valid.channel(trace.targets[k])[row]) << ','
          << synth::format_number(trace.predicted[k][i]);
    }
    out << '\n';
  }
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

}  // namespace toilcast::rolling
