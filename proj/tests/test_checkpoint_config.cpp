#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "toilcast/checkpoint.hpp"
#include "toilcast/errors.hpp"
#include "toilcast/run_config.hpp"

using namespace toilcast;
using nlohmann::json;

namespace {

std::filesystem::path scratch() {
  auto d = std::filesystem::temp_directory_path() / "toilcast_test_ckpt";
  std::filesystem::create_directories(d);
  return d;
}

checkpoint::Checkpoint sample(bool quantile = true) {
  models::TcnConfig c;
  c.n_filters = 4;
  c.lookback = 12;
  if (quantile) c.quantiles = models::QuantileHead::pi98();
  checkpoint::Checkpoint ck{models::Model(c), {}, {}, "abc", "def"};
  nn::init_params(ck.model.params(), 8);
  ck.window.lookback = 12;
  ck.scaler.set(Channel::top_oil, 0.05, -2.0);
  return ck;
}

json base_config() {
  return json{{"seed", 3},
              {"data", {{"synth", {{"days", 4}, {"measurement_sigma", 0.0}, {"iec_params", {{"psi", 6}, {"delta_t_or_k", 45}, {"chi", 0.8}, {"k11", 0.5}, {"tau_o_min", 210}, {"tau_w_min", 10}}}}}}},
              {"split", {{"train_days", 3}, {"valid_days", 1}}},
              {"scaling", {{"top_oil", {{"gain", 0.05}, {"offset", -2.0}}}}},
              {"models", {{"ann", {{"n_layers", 3}, {"n_neurons", 16}, {"lookback", 24}}}}},
              {"train", {{"ann", {{"max_epochs", 7}, {"learning_rate", 0.01}}}}},
              {"grid", {{"ann", {{"n_neurons", {4, 8}}, {"lookbacks", {6}}}}, {"tcn", "standard"}}}};
}

std::string error_of(const json& j) {
  try {
    config::from_json(j);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("checkpoint round trip") {
  auto ck = sample();
  auto j = checkpoint::to_json(ck);
  CHECK(j["format"] == "toilcast-checkpoint");
  CHECK(j["quantiles"] == json({0.01, 0.5, 0.99}));
  auto back = checkpoint::from_json(j);
  CHECK(back.checksum() == ck.checksum());
  CHECK(back.model.family() == models::Family::tcn);
  CHECK(back.window.lookback == 12);
  CHECK(back.scaler.get(Channel::top_oil).gain == 0.05);
  CHECK(back.config_hash == "abc");
  CHECK(checkpoint::to_json(back).dump() == j.dump());

  auto path = scratch() / "m.checkpoint.json";
  checkpoint::save(ck, path);
  CHECK(checkpoint::load(path).checksum() == ck.checksum());
}

TEST_CASE("corrupted checkpoints are rejected") {
  auto j = checkpoint::to_json(sample(false));
  auto tampered = j;
  tampered["parameters"][0]["data"][0] = tampered["parameters"][0]["data"][0].get<double>() + 1.0;
  CHECK_THROWS_AS(checkpoint::from_json(tampered), ValidationError);
  auto wrong = j;
  wrong["format"] = "other";
  CHECK_THROWS_AS(checkpoint::from_json(wrong), ValidationError);
  auto shape = j;
  shape["parameters"][0]["shape"] = json{1};
  CHECK_THROWS_AS(checkpoint::from_json(shape), ValidationError);
  auto missing = j;
  missing["parameters"].erase(0);
  CHECK_THROWS_AS(checkpoint::from_json(missing), ValidationError);
  auto path = scratch() / "broken.json";
  std::ofstream(path) << "{not json";
  CHECK_THROWS_AS(checkpoint::load(path), ValidationError);
  CHECK_THROWS_AS(checkpoint::load(scratch() / "absent.json"), ValidationError);
}

TEST_CASE("run config parsing") {
  auto cfg = config::from_json(base_config());
  CHECK(cfg.seed == 3);
  REQUIRE(cfg.synth);
  CHECK(cfg.synth->days == 4);
  CHECK(cfg.synth->seed == 3);
  CHECK(cfg.synth->iec.tau_o == 210.0);
  CHECK(cfg.scaler.get(Channel::top_oil).offset == -2.0);
  CHECK(cfg.scaler.get(Channel::ambient).gain == 1.0);

  auto mc = std::get<models::MlpConfig>(cfg.model_config(models::Family::ann, true));
  CHECK(mc.n_layers == 3);
  CHECK(mc.lookback == 24);
  CHECK(mc.quantiles.alphas == std::vector<double>{0.01, 0.5, 0.99});
  CHECK(std::get<models::MlpConfig>(cfg.model_config(models::Family::ann, false)).quantiles.alphas.empty());

  auto tc = cfg.train_config(models::Family::ann, false);
  CHECK(tc.max_epochs == 7);
  CHECK(tc.learning_rate == 0.01);
  CHECK(tc.batch_size == 256);
  CHECK(cfg.train_config(models::Family::tide, true).loss.is_quantile());

  auto g = cfg.grid_spec(models::Family::ann);
  CHECK(g.trial_count() == 2);
  CHECK(g.lookbacks == std::vector<std::size_t>{6});
  CHECK(cfg.grid_spec(models::Family::tcn).trial_count() == 18);
  CHECK_THROWS_AS(cfg.grid_spec(models::Family::tide), ValidationError);
}

TEST_CASE("run config errors name the key") {
  auto j = base_config();
  j["colour"] = "blue";
  CHECK(error_of(j).find("colour") != std::string::npos);

  j = base_config();
  j["data"]["synth"].erase("iec_params");
  CHECK(error_of(j).find("data.synth.iec_params") != std::string::npos);

  j = base_config();
  j["data"]["files"] = {{"measurements", "a.csv"}, {"ambient", "b.csv"}};
  CHECK(error_of(j).find("exactly one") != std::string::npos);

  j = base_config();
  j["split"].erase("valid_days");
  CHECK(error_of(j).find("split.valid_days") != std::string::npos);

  j = base_config();
  j["targets"] = {"voltage"};
  CHECK_FALSE(error_of(j).empty());

  j = base_config();
  j["seed"] = "seven";
  CHECK(error_of(j).find("seed") != std::string::npos);
}

TEST_CASE("dataset and split from config") {
  auto cfg = config::from_json(base_config());
  auto ds = config::load_dataset(cfg);
  CHECK(ds.size() == 4 * 288 + 1);
  auto [train, valid] = config::split_dataset(cfg, ds);
  CHECK(train.size() == 3 * 288 + 1);
  CHECK(valid.size() == 288);
  CHECK(valid.timestamps().front() == train.timestamps().back() + kFiveMinutes);
}

TEST_CASE("hashes") {
  auto a = config::from_json(base_config());
  auto j = base_config();
  j["output_dir"] = "elsewhere";
  auto b = config::from_json(j);
  CHECK(a.hash() == b.hash());
  CHECK(a.data_hash() == b.data_hash());
  j["train"]["ann"]["max_epochs"] = 8;
  auto c = config::from_json(j);
  CHECK(c.hash() != a.hash());
  CHECK(c.data_hash() == a.data_hash());
  j["seed"] = 4;
  auto d = config::from_json(j);
  CHECK(d.data_hash() != a.data_hash());
}

TEST_CASE("seed override from the environment") {
  auto path = scratch() / "cfg.json";
  std::ofstream(path) << base_config().dump();
  ::setenv("TOILCAST_SEED", "99", 1);
  auto cfg = config::load(path);
  ::unsetenv("TOILCAST_SEED");
  CHECK(cfg.seed == 99);
  CHECK(cfg.synth->seed == 99);
  CHECK(config::load(path).seed == 3);
}

TEST_CASE("file-backed datasets") {
  auto dir = scratch();
  {
    std::ofstream m(dir / "meas.csv");
    m << "time,oil,amps\n";
    for (int i = 0; i <= 24; ++i) {
      if (i == 5) continue;
      m << format_instant(1593561600 + i * kFiveMinutes) << ',' << 40 + 0.1 * i << ',' << 200 + i << '\n';
    }
    std::ofstream a(dir / "amb.csv");
    a << "timestamp,ambient_c\n"
      << "2020-07-01T00:00:00Z,10\n2020-07-01T01:00:00Z,16\n2020-07-01T02:00:00Z,12\n";
  }
  json j{{"data",
          {{"files",
            {{"measurements", "meas.csv"},
             {"ambient", "amb.csv"},
             {"timestamp_column", "time"},
             {"top_oil_column", "oil"},
             {"load_column", "amps"},
             {"rated_current", 400.0}}}}}};
  auto cfg = config::from_json(j, dir);
  auto ds = config::load_dataset(cfg);
  REQUIRE(ds.size() == 25);
  CHECK(ds.channel(Channel::top_oil)[5] == doctest::Approx(40.5));
  CHECK(ds.channel(Channel::load_factor)[0] == doctest::Approx(0.5));
  CHECK(ds.channel(Channel::ambient)[6] == doctest::Approx(13.0));
}
