#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "toilcast/checkpoint.hpp"
#include "toilcast/iec.hpp"
#include "toilcast/run_config.hpp"

namespace fs = std::filesystem;
using namespace toilcast;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "toilcast_test_cli";

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const fs::path log = kRoot / "last_output.txt";
  const std::string cmd = std::string(TOILCAST_BIN) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::string l;
  std::size_t n = 0;
  while (std::getline(in, l)) ++n;
  return n;
}

const json kIec{{"psi", 6}, {"delta_t_or_k", 45}, {"chi", 0.8}, {"k11", 0.5}, {"tau_o_min", 210}, {"tau_w_min", 10}};

json toy_config(const std::string& out) {
  fs::create_directories(kRoot);
  std::ofstream(kRoot / "iec.json") << kIec.dump();
  return json{{"seed", 5},
              {"output_dir", out},
              {"data", {{"synth", {{"days", 2}, {"measurement_sigma", 0.5}, {"iec_params", kIec}}}}},
              {"iec_params", "iec.json"},
              {"split", {{"train_days", 1.5}, {"valid_days", 0.5}}},
              {"scaling", {{"top_oil", {{"gain", 0.05}, {"offset", -2.0}}}, {"ambient", {{"gain", 0.05}, {"offset", -2.0}}}}},
              {"models", {{"ann", {{"n_layers", 2}, {"n_neurons", 16}, {"lookback", 12}}}}},
              {"train", {{"ann", {{"batch_size", 64}, {"max_epochs", 50}, {"learning_rate", 1e-3}}}}},
              {"grid", {{"ann", {{"n_neurons", {8}}, {"n_layers", {1}}, {"lookbacks", {6}}}}}}};
}

// Constant load and ambient with no noise: top-oil sits at steady state.
json flat_config(const std::string& out) {
  json j = toy_config(out);
  j["data"]["synth"]["measurement_sigma"] = 0.0;
  j["data"]["synth"]["load"] = {{"mean", 0.9}, {"diurnal_amplitude", 0.0}, {"weekly_amplitude", 0.0}, {"noise_sigma", 0.0}};
  j["data"]["synth"]["ambient"] = {{"mean", 18.0}, {"diurnal_amplitude", 0.0}, {"noise_sigma", 0.0}};
  return j;
}

fs::path write_config(const std::string& name, const json& j) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("synth writes deterministic files") {
  const auto cfg = write_config("synth.json", toy_config("synth_a"));
  REQUIRE(run("synth --config " + cfg.string()).code == 0);
  CHECK(line_count(kRoot / "synth_a/measurements.csv") == 2 * 288 + 2);
  CHECK(line_count(kRoot / "synth_a/ambient.csv") == 2 * 24 + 2);
  CHECK(line_count(kRoot / "synth_a/clean_top_oil.csv") == 2 * 288 + 2);
  CHECK(fs::exists(kRoot / "synth_a/synth_iec_params.json"));

  REQUIRE(run("synth --config " + cfg.string() + " --out " + (kRoot / "synth_b").string()).code == 0);
  for (const char* f : {"measurements.csv", "ambient.csv", "clean_top_oil.csv"})
    CHECK(slurp(kRoot / "synth_a" / f) == slurp(kRoot / "synth_b" / f));
}

TEST_CASE("synth without a spec") {
  json j = toy_config("nospec");
  j.erase("data");
  auto r = run("synth --config " + write_config("nospec.json", j).string());
  CHECK(r.code == 2);
  CHECK(r.output.find("data.synth") != std::string::npos);
}

TEST_CASE("unwritable output directory") {
  fs::create_directories(kRoot);
  std::ofstream(kRoot / "plainfile") << "x";
  const auto cfg = write_config("synth_bad.json", toy_config("plainfile/sub"));
  auto r = run("synth --config " + cfg.string());
  CHECK(r.code != 0);
  CHECK_FALSE(r.output.empty());
}

TEST_CASE("train and evaluate a small model") {
  const auto cfg = write_config("toy.json", toy_config("toy"));
  auto r = run("train --config " + cfg.string() + " --model ann");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(kRoot / "toy/ann.checkpoint.json"));
  auto rep = json::parse(slurp(kRoot / "toy/ann.train_report.json"));
  CHECK(rep["epochs_run"] == 50);
  CHECK(rep["epoch_loss"].back().get<double>() < rep["initial_loss"].get<double>());

  REQUIRE(run("train --config " + cfg.string() + " --model ann --loss quantile --epochs 3").code == 0);
  auto ck = json::parse(slurp(kRoot / "toy/ann_quantile.checkpoint.json"));
  CHECK(ck["quantiles"] == json({0.01, 0.5, 0.99}));

  auto e = run("eval --config " + cfg.string() + " --checkpoint " + (kRoot / "toy/ann_quantile.checkpoint.json").string() +
               " --iec");
  REQUIRE(e.code == 0);
  auto report = json::parse(slurp(kRoot / "toy/report.json"));
  const auto& q = report["models"][0]["targets"]["top_oil"];
  CHECK(q.contains("picp"));
  CHECK(q.contains("mean_width"));
  CHECK(report["models"][1]["id"] == "iec");
  CHECK(fs::exists(kRoot / "toy/plot.svg"));
  CHECK(fs::exists(kRoot / "toy/predictions_ann_quantile.csv"));
  CHECK(fs::exists(kRoot / "toy/predictions_iec.csv"));
}

TEST_CASE("argument validation") {
  const auto cfg = write_config("args.json", toy_config("args"));
  CHECK(run("train --config " + cfg.string() + " --model lstm").code == 2);
  CHECK(run("train --config " + cfg.string() + " --model ann --loss median").code == 2);
  CHECK(run("train --config " + (kRoot / "absent.json").string() + " --model ann").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("eval --config " + cfg.string()).code == 2);
}

TEST_CASE("an oracle checkpoint scores zero") {
  const auto path = write_config("flat.json", flat_config("flat"));
  const auto cfg = config::load(path);
  const double ss = iec::steady_state(0.9, 18.0, cfg.load_iec_params());

  models::MlpConfig mc;
  mc.n_layers = 2;
  mc.n_neurons = 4;
  mc.lookback = 6;
  checkpoint::Checkpoint ck{models::Model(mc), cfg.window_spec(6, 1), cfg.scaler, cfg.hash(), cfg.data_hash()};
  auto& ps = ck.model.params();
  for (auto& p : ps) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  ps[ps.index_of("mlp.out.b")].value.data = {cfg.scaler.scale(Channel::top_oil, ss)};
  fs::create_directories(cfg.output_dir);
  checkpoint::save(ck, cfg.output_dir / "oracle.checkpoint.json");

  auto r = run("eval --config " + path.string() + " --checkpoint " + (cfg.output_dir / "oracle.checkpoint.json").string() +
               " --iec");
  REQUIRE(r.code == 0);
  auto report = json::parse(slurp(cfg.output_dir / "report.json"));
  CHECK(report["models"][0]["targets"]["top_oil"]["mae"].get<double>() <= 1e-9);
  CHECK(report["models"][1]["targets"]["top_oil"]["mae"].get<double>() <= 0.05);
}

TEST_CASE("iec with the generating parameters on noise-free data") {
  json j = toy_config("iec_clean");
  j["data"]["synth"]["measurement_sigma"] = 0.0;
  auto r = run("eval --config " + write_config("iec_clean.json", j).string() + " --iec");
  REQUIRE(r.code == 0);
  auto report = json::parse(slurp(kRoot / "iec_clean/report.json"));
  CHECK(report["models"][0]["targets"]["top_oil"]["mae"].get<double>() <= 0.05);
}

TEST_CASE("grid search writes one row per trial") {
  const auto cfg = write_config("grid.json", toy_config("grid"));
  auto r = run("grid --config " + cfg.string() + " --model ann --epochs 2");
  REQUIRE(r.code == 0);
  CHECK(line_count(kRoot / "grid/grid_ann.csv") == 2);
  auto best = json::parse(slurp(kRoot / "grid/grid_ann_best.json"));
  CHECK(best["params"]["n_neurons"] == 8);
}

TEST_CASE("mismatched checkpoints are refused") {
  const auto cfg = write_config("mismatch_a.json", toy_config("mismatch"));
  REQUIRE(run("train --config " + cfg.string() + " --model ann --epochs 1").code == 0);
  json j = toy_config("mismatch");
  j["scaling"]["top_oil"]["gain"] = 0.1;
  auto r = run("eval --config " + write_config("mismatch_b.json", j).string() + " --model ann");
  CHECK(r.code == 2);
  CHECK(r.output.find("scaling") != std::string::npos);
}
