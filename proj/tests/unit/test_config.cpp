#include <doctest.h>

#include <fstream>
#include <regex>

#include "test_support.hpp"
#include "uca/config.hpp"
#include "uca/error.hpp"
#include "uca/sweep.hpp"

using namespace uca;
using nlohmann::json;
using uca::testing::TempDir;

TEST_CASE("config round trips through JSON") {
  CliConfig c;
  c.run.attack.delta = 0.6;
  c.run.attack.layer_weights = {{"encoder", 0.2}, {"projector", 0.8}};
  c.run.attack.smooth_target = SmoothnessTarget::Texture;
  c.run.sampling.pitch_weights = {{22.5, 2.0}, {45.0, 1.0}, {67.5, 1.0}};
  c.run.schedule = identity_schedule(96, 96);
  c.run.optimizer = OptimizerKind::Momentum;
  c.run.learning_rate = 0.05;
  c.manifest = "/data/train/manifest.jsonl";
  c.judge = "none";
  c.success_mode = eval::SuccessMode::OpenText;
  c.victim_options = {{"seed", 3}};
  const json j = config_to_json(c);
  const CliConfig back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.run.sampling.pitch_weights.at(22.5) == 2.0);
  CHECK(back.run.optimizer == OptimizerKind::Momentum);
  CHECK(back.run.schedule.size() == 1);
  CHECK(back.success_mode == eval::SuccessMode::OpenText);
}

TEST_CASE("defaults are valid and match the documented values") {
  const CliConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.run.learning_rate == 0.1);
  CHECK(c.run.max_epochs == 5);
  CHECK(c.run.attack.delta == 0.8);
  CHECK(c.run.attack.lambda_smooth == 0.01);
  CHECK(c.run.attack.layer_weights.at("encoder") == 0.4);
  CHECK(c.run.attack.layer_weights.at("projector") == 0.6);
  CHECK(c.run.sampling.pitch_weights.at(22.5) == 3.0);
  CHECK(c.run.schedule.size() == 2);
}

TEST_CASE("unknown keys and versions are rejected") {
  json j = config_to_json(CliConfig{});
  j["attack"]["delat"] = 0.5;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = config_to_json(CliConfig{});
  j["surprise"] = 1;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = config_to_json(CliConfig{});
  j["version"] = kConfigVersion + 1;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = config_to_json(CliConfig{});
  j["attack"]["delta"] = "high";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
}

TEST_CASE("load_config resolves relative paths against the file") {
  TempDir dir;
  std::filesystem::create_directories(dir / "cfg");
  json j = {{"version", kConfigVersion}, {"paths", {{"manifest", "../data/manifest.jsonl"}}}};
  std::ofstream(dir / "cfg" / "a.json") << j.dump();
  const CliConfig c = load_config(dir / "cfg" / "a.json");
  CHECK(c.manifest.lexically_normal() == (dir / "data" / "manifest.jsonl").lexically_normal());
  CHECK_THROWS_AS(load_config(dir / "missing.json"), MissingFile);
  std::ofstream(dir / "bad.json") << "{";
  CHECK_THROWS_AS(load_config(dir / "bad.json"), FormatError);
}

TEST_CASE("overrides apply by dotted key and are recorded") {
  CliConfig c;
  apply_override(c, "optimizer.learning_rate", "0.25");
  apply_override(c, "attack.layer_weights.encoder=0.9");
  apply_override(c, "sampling.pitch_weights.22.5", "5");
  apply_override(c, "optimizer.kind", "gd");
  apply_override(c, "victim.options.seed", "4");
  CHECK(c.run.learning_rate == 0.25);
  CHECK(c.run.attack.layer_weights.at("encoder") == 0.9);
  CHECK(c.run.sampling.pitch_weights.at(22.5) == 5.0);
  CHECK(c.run.optimizer == OptimizerKind::GradientDescent);
  CHECK(c.victim_options.at("seed") == 4);
  CHECK(c.overrides == std::vector<std::string>{"optimizer.learning_rate=0.25", "attack.layer_weights.encoder=0.9",
                                                "sampling.pitch_weights.22.5=5", "optimizer.kind=gd",
                                                "victim.options.seed=4"});
  CHECK_THROWS_AS(apply_override(c, "optimizer.learnin_rate", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "no_equals_sign"), ConfigError);
  // Values are checked when the merged config is validated.
  apply_override(c, "optimizer.learning_rate", "-1");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("provenance records config, seed, version, overrides and digests") {
  TempDir dir;
  CliConfig c;
  c.run.seed = 77;
  c.run_id = make_run_id(77);
  apply_override(c, "optimizer.epochs", "3");
  std::ofstream(dir / "out.txt") << "payload";
  write_provenance(c, dir.path(), "attack", {dir / "out.txt"}, {{"note", "x"}});
  std::ifstream in(dir / "provenance.json");
  const json p = json::parse(in);
  CHECK(p.at("seed") == 77);
  CHECK(p.at("run_id") == c.run_id);
  CHECK(p.at("command") == "attack");
  CHECK(p.at("code_version") == std::string(code_version()));
  CHECK(p.at("overrides") == json::array({"optimizer.epochs=3"}));
  CHECK(p.at("outputs").at("out.txt").get<std::string>().size() == 64);
  CHECK(p.at("note") == "x");
  const CliConfig snap = load_config(dir / "config.json");
  CHECK(snap.run.max_epochs == 3);
  CHECK(std::regex_match(c.run_id, std::regex(R"(\d{8}T\d{6}Z-[0-9a-f]{8})")));
}

TEST_CASE("sweep grids") {
  const SweepAxis alpha = parse_sweep_axis("alpha=0.4:0.6,0.5:0.5");
  CHECK(alpha.name == "alpha");
  CHECK(alpha.values.size() == 2);
  CHECK_THROWS_AS(parse_sweep_axis("alpha"), ConfigError);
  CHECK_THROWS_AS(parse_sweep_axis("alpha="), ConfigError);

  const std::vector<double> pitches{22.5, 45.0, 67.5};
  const auto cells = grid_cells({alpha, parse_sweep_axis("pitch_ratio=3:1:1,1:1:1")}, pitches);
  REQUIRE(cells.size() == 4);
  bool best = false;
  for (const auto& cell : cells) {
    CliConfig c;
    for (const auto& [k, v] : cell.overrides) apply_override(c, k, v);
    CHECK_NOTHROW(c.validate());
    best = best || (c.run.attack.layer_weights.at("encoder") == 0.4 &&
                    c.run.attack.layer_weights.at("projector") == 0.6 && c.run.sampling.pitch_weights.at(22.5) == 3.0);
  }
  CHECK(best);
  CHECK_THROWS_AS(grid_cells({}, pitches), ConfigError);
  CHECK_THROWS_AS(grid_cells({parse_sweep_axis("pitch_ratio=3:1")}, pitches), ConfigError);

  const auto ladder = ladder_cells(pitches);
  REQUIRE(ladder.size() == 5);
  CliConfig first, last;
  for (const auto& [k, v] : ladder.front().overrides) apply_override(first, k, v);
  for (const auto& [k, v] : ladder.back().overrides) apply_override(last, k, v);
  CHECK(first.run.attack.layer_weights.at("projector") == 0.0);
  CHECK(first.run.schedule.size() == 1);
  CHECK(last.run.schedule.size() == 2);
  CHECK(last.run.sampling.pitch_weights.at(22.5) == 3.0);
}
