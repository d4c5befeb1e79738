#include "toilcast/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "toilcast/errors.hpp"
#include "toilcast/optim.hpp"
#include "toilcast/rng.hpp"
#include "toilcast/rolling.hpp"

namespace toilcast::trainer {

using models::Family;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (max_epochs < 1) throw ValidationError("max_epochs must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be a non-negative finite number");
  }
  loss.validate();
}

TrainConfig reference_defaults(Family family, bool quantile) {
  TrainConfig c;
  switch (family) {
    case Family::ann:
      c.batch_size = 256;
      c.max_epochs = 4000;
      c.learning_rate = 1e-5;
      break;
    case Family::tcn:
      c.batch_size = 512;
      c.max_epochs = 500;
      c.learning_rate = 1e-4;
      break;
    case Family::tide:
      c.batch_size = 512;
      c.max_epochs = 100;
      c.learning_rate = quantile ? 1e-5 : 1e-6;
      break;
  }
  if (quantile) c.loss = metrics::LossKind::quantile(models::QuantileHead::pi98().alphas);
  return c;
}

nlohmann::json TrainReport::to_json() const {
  return {{"initial_loss", initial_loss},
          {"epoch_loss", epoch_loss},
          {"epochs_run", epochs_run()},
          {"wall_seconds", wall_seconds},
          {"checksum", checksum}};
}

models::ModelInput gather_batch(const WindowSet& w, std::span<const std::size_t> rows) {
  const std::size_t B = rows.size();
  const std::size_t C = w.n_targets + w.n_covariates;
  models::ModelInput in;
  in.inputs = nn::Tensor({B, w.lookback, C});
  in.future_covariates = nn::Tensor({B, w.horizon, w.n_covariates});
  const std::size_t in_w = w.input_width();
  const std::size_t fc_w = w.horizon * w.n_covariates;
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(w.inputs.begin() + static_cast<std::ptrdiff_t>(rows[b] * in_w), in_w,
                in.inputs.data.begin() + static_cast<std::ptrdiff_t>(b * in_w));
    std::copy_n(w.future_covariates.begin() + static_cast<std::ptrdiff_t>(rows[b] * fc_w), fc_w,
                in.future_covariates.data.begin() + static_cast<std::ptrdiff_t>(b * fc_w));
  }
  return in;
}

namespace {

nn::Tensor gather_targets(const WindowSet& w, std::span<const std::size_t> rows) {
  const std::size_t tw = w.target_width();
  nn::Tensor t({rows.size(), tw});
  for (std::size_t b = 0; b < rows.size(); ++b)
    std::copy_n(w.targets.begin() + static_cast<std::ptrdiff_t>(rows[b] * tw), tw,
                t.data.begin() + static_cast<std::ptrdiff_t>(b * tw));
  return t;
}

nn::Var loss_node(nn::Tape& tape, nn::Var pred, const nn::Tensor& target, const metrics::LossKind& loss) {
  if (loss.is_quantile()) return nn::pinball_loss(tape, pred, target, loss.alphas);
  return nn::mae_loss(tape, pred, target);
}

void check_compatible(const models::Model& model, const WindowSet& w, const metrics::LossKind& loss) {
  if (w.n_windows == 0) throw ValidationError("no training windows");
  if (model.lookback() != w.lookback || model.n_targets() != w.n_targets || model.n_covariates() != w.n_covariates ||
      model.horizon() != w.horizon) {
    throw ValidationError("model shape (L=" + std::to_string(model.lookback()) + ", H=" +
                          std::to_string(model.horizon()) + ") does not match the windows (L=" +
                          std::to_string(w.lookback) + ", H=" + std::to_string(w.horizon) + ")");
  }
  if (loss.is_quantile() != model.quantiles().is_quantile() ||
      (loss.is_quantile() && loss.alphas != model.quantiles().alphas)) {
    throw ValidationError("loss kind does not match the model's quantile head");
  }
}

// Fisher-Yates with an explicit draw so the order does not depend on the
// standard library's shuffle.
void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

double training_loss(models::Model& model, const WindowSet& windows, const metrics::LossKind& loss) {
  check_compatible(model, windows, loss);
  constexpr std::size_t kChunk = 1024;
  std::vector<std::size_t> rows;
  double total = 0.0;
  for (std::size_t start = 0; start < windows.n_windows; start += kChunk) {
    const std::size_t end = std::min(windows.n_windows, start + kChunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    nn::Tape tape;
    nn::Var pred = model.forward(tape, gather_batch(windows, rows));
    const double l = tape.value(loss_node(tape, pred, gather_targets(windows, rows), loss)).item();
    total += l * static_cast<double>(rows.size());
  }
  return total / static_cast<double>(windows.n_windows);
}

TrainReport train(models::Model& model, const WindowSet& windows, const TrainConfig& cfg) {
  cfg.validate();
  check_compatible(model, windows, cfg.loss);
  const auto t_start = std::chrono::steady_clock::now();

  nn::ParameterSet& params = model.params();
  nn::AdamState adam = nn::make_adam_state(params, cfg.learning_rate);
  Rng rng(derive_seed(cfg.seed, 0x5EED));
  Rng dropout_rng(derive_seed(cfg.seed, 0xD809));
  std::vector<std::size_t> order(windows.n_windows);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  report.initial_loss = training_loss(model, windows, cfg.loss);
  if (!std::isfinite(report.initial_loss)) throw NumericError("initial training loss is non-finite");
  double best = report.initial_loss;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle(order, rng);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      params.zero_grad();
      nn::Tape tape;
      models::ModelInput batch = gather_batch(windows, rows);
      batch.dropout_rng = &dropout_rng;
      nn::Var pred = model.forward(tape, batch);
      nn::Var loss = loss_node(tape, pred, gather_targets(windows, rows), cfg.loss);
      if (!std::isfinite(tape.value(loss).item())) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      tape.backward(loss);
      try {
        if (cfg.optimizer == Optimizer::adam) {
          nn::adam_update(params, adam);
        } else {
          nn::sgd_update(params, cfg.learning_rate);
        }
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
    }
    const double l = training_loss(model, windows, cfg.loss);
    if (!std::isfinite(l)) throw NumericError("non-finite training loss after epoch " + std::to_string(epoch));
    report.epoch_loss.push_back(l);
    if (cfg.patience > 0) {
      if (l < best) {
        best = l;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  report.checksum = params.checksum();
  return report;
}

// ---------------------------------------------------------------------------
// Grid search

GridSpec GridSpec::standard(Family family) {
  GridSpec g;
  g.family = family;
  switch (family) {
    case Family::ann:
      g.values["n_neurons"] = {32, 64, 128};
      g.values["n_layers"] = {2, 4, 8};
      break;
    case Family::tcn:
      g.values["kernel"] = {2, 4};
      g.values["n_filters"] = {8, 16, 32};
      break;
    case Family::tide:
      g.values["temporal_decoder_hidden"] = {8, 16};
      g.values["decoder_output_dim"] = {2, 4, 8};
      break;
  }
  return g;
}

std::size_t GridSpec::trial_count() const {
  std::size_t n = lookbacks.size();
  for (const auto& [key, vals] : values) n *= vals.size();
  return n;
}

std::vector<nlohmann::json> GridSpec::enumerate() const {
  std::vector<nlohmann::json> configs{nlohmann::json::object()};
  for (const auto& [key, vals] : values) {
    std::vector<nlohmann::json> next;
    for (const auto& base : configs) {
      for (const auto& v : vals) {
        nlohmann::json c = base;
        c[key] = v;
        next.push_back(std::move(c));
      }
    }
    configs = std::move(next);
  }
  std::vector<nlohmann::json> out;
  for (const auto& c : configs) {
    for (std::size_t L : lookbacks) {
      nlohmann::json with = c;
      with["lookback"] = L;
      out.push_back(std::move(with));
    }
  }
  return out;
}

std::vector<TrialResult> rank(std::vector<TrialResult> trials) {
  std::stable_sort(trials.begin(), trials.end(), [](const TrialResult& a, const TrialResult& b) {
    if (a.ok() != b.ok()) return a.ok();
    if (!a.ok()) return a.trial_id < b.trial_id;
    if (a.val_mae != b.val_mae) return a.val_mae < b.val_mae;
    if (a.n_parameters != b.n_parameters) return a.n_parameters < b.n_parameters;
    return a.trial_id < b.trial_id;
  });
  return trials;
}

TrialResult select_best(const std::vector<TrialResult>& ranked) {
  const auto ordered = rank(ranked);
  if (ordered.empty() || !ordered.front().ok()) throw ValidationError("every grid trial failed");
  return ordered.front();
}

std::vector<TrialResult> grid_search(const GridSpec& grid, const GridData& data, const TrainConfig& train_cfg,
                                     const std::function<void(const TrialResult&)>& on_trial) {
  const auto configs = grid.enumerate();
  if (configs.empty() || grid.trial_count() == 0) throw ValidationError("grid is empty");
  std::vector<TrialResult> results;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    TrialResult r;
    r.trial_id = i;
    r.family = grid.family;
    r.params = configs[i];
    r.lookback = configs[i].at("lookback").get<std::size_t>();
    try {
      nlohmann::json merged = data.base_config.is_object() ? data.base_config : nlohmann::json::object();
      merged.update(configs[i]);
      merged["n_targets"] = data.window.targets.size();
      merged["n_covariates"] = data.window.covariates.size();
      merged["quantiles"] = train_cfg.loss.alphas;
      models::Model model(models::config_from_json(grid.family, merged));
      r.n_parameters = model.params().scalar_count();

      WindowSpec ws = data.window;
      ws.lookback = r.lookback;
      ws.horizon = model.horizon();
      const WindowSet windows = make_windows(data.train, ws, data.scaler);
      TrainConfig cfg = train_cfg;
      cfg.seed = derive_seed(train_cfg.seed, i);
      nn::init_params(model.params(), derive_seed(cfg.seed, 1));
      train(model, windows, cfg);

      rolling::NeuralPredictor predictor(model, data.scaler, ws);
      const auto trace = rolling::autoregressive_predict(predictor, data.valid, ws, models::family_name(grid.family));
      const auto report = rolling::evaluate({trace}, data.valid);
      r.val_mae = report.models.front().targets.front().second.mae;
      r.val_mse = report.models.front().targets.front().second.mse;
      if (!std::isfinite(r.val_mae)) throw NumericError("validation MAE is non-finite");
    } catch (const std::exception& e) {
      r.status = std::string("failed: ") + e.what();
    }
    if (on_trial) on_trial(r);
    results.push_back(std::move(r));
  }
  return rank(std::move(results));
}

std::string results_csv_header() { return "trial_id,family,params_json,lookback,val_mae,val_mse,status"; }

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string number_or_empty(double v, bool ok) {
  if (!ok) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string results_csv_row(const TrialResult& r) {
  std::string status = r.status;
  std::replace(status.begin(), status.end(), '\n', ' ');
  return std::to_string(r.trial_id) + "," + models::family_name(r.family) + "," + csv_quote(r.params.dump()) + "," +
         std::to_string(r.lookback) + "," + number_or_empty(r.val_mae, r.ok()) + "," +
         number_or_empty(r.val_mse, r.ok()) + "," + csv_quote(status);
}

}  // namespace toilcast::trainer
