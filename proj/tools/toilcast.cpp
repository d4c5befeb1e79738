// toilcast: synthetic data, training, grid search and evaluation from a
// single JSON run config.

#include <cstdio>
#ifdef __GLIBC__
#include <malloc.h>
#endif
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "toilcast/checkpoint.hpp"
#include "toilcast/errors.hpp"
#include "toilcast/plot.hpp"
#include "toilcast/rng.hpp"
#include "toilcast/rolling.hpp"
#include "toilcast/run_config.hpp"
#include "toilcast/synth.hpp"
#include "toilcast/trainer.hpp"

namespace fs = std::filesystem;
using namespace toilcast;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::string model;
  std::string loss = "point";
  std::string out;
  bool iec = false;
  std::vector<std::string> checkpoints;
  std::optional<std::size_t> epochs;
};

config::RunConfig load_config(const Options& o) {
  config::RunConfig cfg = config::load(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec || !fs::is_directory(cfg.output_dir)) {
    throw ValidationError("cannot create output directory '" + cfg.output_dir.string() + "'");
  }
  return cfg;
}

bool quantile_loss(const Options& o) {
  if (o.loss == "point") return false;
  if (o.loss == "quantile") return true;
  throw ValidationError("unknown --loss '" + o.loss + "' (expected point or quantile)");
}

models::Family family_option(const Options& o) {
  if (o.model.empty()) throw ValidationError("--model is required (ann, tcn or tide)");
  return models::family_from_name(o.model);
}

std::string model_id(models::Family f, bool quantile) {
  return models::family_name(f) + (quantile ? "_quantile" : "");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

int cmd_synth(const Options& o) {
  const config::RunConfig cfg = load_config(o);
  if (!cfg.synth) throw ValidationError("missing key 'data.synth'");
  const synth::SynthDataset ds = synth::gen_dataset(*cfg.synth);
  synth::write_csv(ds, cfg.output_dir);
  write_text(cfg.output_dir / "synth_iec_params.json", iec::params_to_json(cfg.synth->iec).dump(2) + "\n");
  std::printf("wrote %zu measurement rows and %zu hourly ambient rows to %s\n", ds.data.size(),
              ds.ambient_hourly.size(), cfg.output_dir.string().c_str());
  return 0;
}

int cmd_train(const Options& o) {
  const config::RunConfig cfg = load_config(o);
  const models::Family family = family_option(o);
  const bool quantile = quantile_loss(o);
  const TransformerDataset ds = config::load_dataset(cfg);
  const auto [train_ds, valid_ds] = config::split_dataset(cfg, ds);

  models::Model model(cfg.model_config(family, quantile));
  nn::init_params(model.params(), derive_seed(cfg.seed, 1));
  const WindowSpec window = cfg.window_spec(model.lookback(), model.horizon());
  const WindowSet windows = make_windows(train_ds, window, cfg.scaler);
  trainer::TrainConfig tc = cfg.train_config(family, quantile);
  if (o.epochs) tc.max_epochs = *o.epochs;
  tc.validate();

  const trainer::TrainReport report = trainer::train(model, windows, tc);
  const std::string id = model_id(family, quantile);
  checkpoint::Checkpoint ck{std::move(model), window, cfg.scaler, cfg.hash(), cfg.data_hash()};
  checkpoint::save(ck, cfg.output_dir / (id + ".checkpoint.json"));

  nlohmann::json rj = report.to_json();
  rj["model_id"] = id;
  rj["config_hash"] = cfg.hash();
  rj["n_windows"] = windows.n_windows;
  rj["n_parameters"] = ck.model.params().scalar_count();
  write_text(cfg.output_dir / (id + ".train_report.json"), rj.dump(2) + "\n");
  std::printf("%s: %zu epochs, loss %.6g -> %.6g, checkpoint %s\n", id.c_str(), report.epochs_run(),
              report.initial_loss, report.epoch_loss.empty() ? report.initial_loss : report.epoch_loss.back(),
              (cfg.output_dir / (id + ".checkpoint.json")).string().c_str());
  return 0;
}

int cmd_grid(const Options& o) {
  const config::RunConfig cfg = load_config(o);
  const models::Family family = family_option(o);
  const bool quantile = quantile_loss(o);
  const trainer::GridSpec grid = cfg.grid_spec(family);
  const TransformerDataset ds = config::load_dataset(cfg);
  auto [train_ds, valid_ds] = config::split_dataset(cfg, ds);

  trainer::GridData data{std::move(train_ds), std::move(valid_ds), cfg.window_spec(48, 1), cfg.scaler, {}};
  const std::string name = models::family_name(family);
  if (cfg.raw.contains("models") && cfg.raw.at("models").contains(name)) data.base_config = cfg.raw.at("models").at(name);
  trainer::TrainConfig tc = cfg.train_config(family, quantile);
  if (o.epochs) tc.max_epochs = *o.epochs;
  tc.validate();

  const fs::path csv = cfg.output_dir / ("grid_" + model_id(family, quantile) + ".csv");
  std::ofstream out(csv, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + csv.string() + "'");
  out << trainer::results_csv_header() << '\n' << std::flush;
  const auto ranked = trainer::grid_search(grid, data, tc, [&](const trainer::TrialResult& r) {
    out << trainer::results_csv_row(r) << '\n' << std::flush;
    std::fprintf(stderr, "trial %zu/%zu %s\n", r.trial_id + 1, grid.trial_count(), r.ok() ? "ok" : r.status.c_str());
  });
  if (!out) throw ValidationError("failed writing '" + csv.string() + "'");

  std::printf("rank  trial  lookback  val_mae     params  config\n");
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    if (r.ok()) {
      std::printf("%4zu  %5zu  %8zu  %9.4f  %6zu  %s\n", i + 1, r.trial_id, r.lookback, r.val_mae, r.n_parameters,
                  r.params.dump().c_str());
    } else {
      std::printf("%4zu  %5zu  %8zu  %9s  %6s  %s\n", i + 1, r.trial_id, r.lookback, "-", "-", r.status.c_str());
    }
  }
  const trainer::TrialResult best = trainer::select_best(ranked);
  write_text(cfg.output_dir / ("grid_" + model_id(family, quantile) + "_best.json"),
             nlohmann::json{{"trial_id", best.trial_id},
                            {"family", name},
                            {"params", best.params},
                            {"val_mae", best.val_mae},
                            {"val_mse", best.val_mse},
                            {"n_parameters", best.n_parameters}}
                     .dump(2) +
                 "\n");
  return 0;
}

std::string checkpoint_id(const fs::path& p) {
  std::string stem = p.filename().string();
  for (const char* suffix : {".checkpoint.json", ".json"}) {
    const std::string s = suffix;
    if (stem.size() > s.size() && stem.compare(stem.size() - s.size(), s.size(), s) == 0) {
      return stem.substr(0, stem.size() - s.size());
    }
  }
  return stem;
}

void check_compatible(const checkpoint::Checkpoint& ck, const config::RunConfig& cfg, const std::string& id) {
  if (ck.window.targets != cfg.targets || ck.window.covariates != cfg.covariates) {
    throw ValidationError("checkpoint '" + id + "' does not match the config's targets and covariates");
  }
  for (Channel c : cfg.targets) {
    const auto a = ck.scaler.get(c), b = cfg.scaler.get(c);
    if (a.gain != b.gain || a.offset != b.offset) {
      throw ValidationError("checkpoint '" + id + "' was trained with different scaling for '" +
                            std::string(channel_name(c)) + "'");
    }
  }
  for (Channel c : cfg.covariates) {
    const auto a = ck.scaler.get(c), b = cfg.scaler.get(c);
    if (a.gain != b.gain || a.offset != b.offset) {
      throw ValidationError("checkpoint '" + id + "' was trained with different scaling for '" +
                            std::string(channel_name(c)) + "'");
    }
  }
}

int cmd_eval(const Options& o) {
  const config::RunConfig cfg = load_config(o);
  std::vector<fs::path> paths(o.checkpoints.begin(), o.checkpoints.end());
  if (paths.empty() && !o.model.empty()) {
    paths.push_back(cfg.output_dir / (model_id(family_option(o), quantile_loss(o)) + ".checkpoint.json"));
  }
  if (paths.empty() && !o.iec) throw ValidationError("nothing to evaluate: pass --checkpoint, --model or --iec");

  const TransformerDataset ds = config::load_dataset(cfg);
  const auto [train_ds, valid_ds] = config::split_dataset(cfg, ds);

  std::vector<rolling::ForecastTrace> traces;
  for (const fs::path& p : paths) {
    checkpoint::Checkpoint ck = checkpoint::load(p);
    const std::string id = checkpoint_id(p);
    check_compatible(ck, cfg, id);
    if (!ck.data_hash.empty() && ck.data_hash != cfg.data_hash()) {
      std::fprintf(stderr, "note: checkpoint '%s' was trained on a different data configuration\n", id.c_str());
    }
    rolling::NeuralPredictor predictor(ck.model, ck.scaler, ck.window);
    traces.push_back(rolling::autoregressive_predict(predictor, valid_ds, ck.window, id));
  }
  if (o.iec) {
    iec::SimulateOptions opts;
    opts.allow_coarse_step = cfg.allow_coarse_step;
    traces.push_back(rolling::iec_predict(cfg.load_iec_params(), valid_ds, cfg.iec_dt_min, 0, opts, "iec"));
  }

  for (const auto& tr : traces) {
    rolling::write_predictions_csv(tr, valid_ds, cfg.output_dir / ("predictions_" + tr.model_id + ".csv"));
  }
  const rolling::EvaluationReport report = rolling::evaluate(traces, valid_ds, cfg.hash());
  write_text(cfg.output_dir / "report.json", report.to_json().dump(2) + "\n");
  plot::write_svg(traces, valid_ds, cfg.output_dir / "plot.svg");

  std::printf("%-20s %-12s %10s %10s %8s %8s\n", "model", "target", "MAE", "MSE", "PICP", "width");
  for (const auto& m : report.models) {
    for (const auto& [c, tm] : m.targets) {
      std::printf("%-20s %-12s %10.4f %10.4f", m.model_id.c_str(), std::string(channel_name(c)).c_str(), tm.mae, tm.mse);
      if (tm.picp) std::printf(" %8.3f %8.3f", *tm.picp, *tm.mean_width);
      std::printf("\n");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Top-oil temperature forecasting toolkit"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run config JSON")->required();
    sub->add_option("--out", o.out, "output directory (overrides output_dir)");
  };
  auto add_model = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--model", o.model, "ann, tcn or tide");
    if (required) opt->required();
    sub->add_option("--loss", o.loss, "point or quantile");
    sub->add_option("--epochs", o.epochs, "override the epoch ceiling");
  };

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
  add_common(synth_cmd);
  auto* train_cmd = app.add_subcommand("train", "train one model and save a checkpoint");
  add_common(train_cmd);
  add_model(train_cmd, true);
  auto* grid_cmd = app.add_subcommand("grid", "grid search over a model family");
  add_common(grid_cmd);
  add_model(grid_cmd, true);
  auto* eval_cmd = app.add_subcommand("eval", "autoregressive evaluation on the validation slice");
  add_common(eval_cmd);
  eval_cmd->add_option("--model", o.model, "evaluate <out>/<model>.checkpoint.json");
  eval_cmd->add_option("--loss", o.loss, "point or quantile");
  eval_cmd->add_option("--checkpoint", o.checkpoints, "checkpoint files")->expected(1, -1);
  eval_cmd->add_flag("--iec", o.iec, "include the IEC thermal model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*synth_cmd) return cmd_synth(o);
    if (*train_cmd) return cmd_train(o);
    if (*grid_cmd) return cmd_grid(o);
    if (*eval_cmd) return cmd_eval(o);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
