#include <doctest.h>

#include <fstream>

#include "test_support.hpp"
#include "uca/error.hpp"
#include "uca/eval/evaluate.hpp"
#include "uca/eval/plots.hpp"
#include "uca/surrogate.hpp"

using namespace uca;
using namespace uca::eval;
using uca::testing::TempDir;

namespace {

SurrogateConfig tiny_config() {
  SurrogateConfig c;
  c.input_size = 32;
  c.patch = 8;
  c.embed_dim = 12;
  c.hidden_dim = 16;
  c.blocks = 2;
  c.proj_rows = 4;
  c.proj_dim = 10;
  c.text_buckets = 8;
  return c;
}

struct Fixture {
  TempDir dir{"uca-eval"};
  DatasetManifest manifest;
  SurrogateVictim victim{tiny_config()};
  Fixture() { manifest = uca::testing::small_dataset(dir.path(), 1, 32).manifest; }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

// Every prompt raises this judge's error.
class BrokenJudge final : public JudgeClient {
 public:
  std::string name() const override { return "broken"; }
  JudgeVerdict judge(std::string_view, std::string_view, Scenario) override {
    ++calls;
    throw JudgeUnavailable("offline");
  }
  int calls = 0;
};

class GarbledJudge final : public JudgeClient {
 public:
  std::string name() const override { return "garbled"; }
  JudgeVerdict judge(std::string_view, std::string_view, Scenario) override { return parse_judge_reply("??"); }
};

EvalRecord rec(const std::string& id, Scenario s, bool ok, double d = 5.0, double p = 22.5) {
  EvalRecord r;
  r.sample_id = id;
  r.scenario = s;
  r.prompt = "p";
  r.clean_text = "stop";
  r.adv_text = ok ? "go straight" : "stop";
  r.success = ok;
  r.distance_m = d;
  r.pitch_deg = p;
  r.bleu = r.meteor = r.rouge = ok ? 0.0 : 1.0;
  return r;
}

}  // namespace

TEST_CASE("prompt set validation and shipped copy") {
  const PromptSet ps = default_prompt_set();
  CHECK_NOTHROW(ps.validate());
  CHECK(ps.size() == 9);
  const PromptSet shipped = load_prompt_set(uca::testing::source_dir() / "assets" / "prompts.json");
  CHECK(prompt_set_to_json(shipped) == prompt_set_to_json(ps));

  PromptSet partial = ps;
  partial.prompts.erase(Scenario::Perception);
  CHECK_NOTHROW(partial.validate());
  CHECK_THROWS_AS(PromptSet{}.validate(), ConfigError);
  PromptSet blank = ps;
  blank.prompts[Scenario::Planning] = {"  "};
  CHECK_THROWS_AS(blank.validate(), ConfigError);

  TempDir dir;
  CHECK_THROWS_AS(load_prompt_set(dir / "none.json"), MissingFile);
  std::ofstream(dir / "bad.json") << "[1, 2";
  CHECK_THROWS_AS(load_prompt_set(dir / "bad.json"), FormatError);
}

TEST_CASE("clean texture as the adversary gives perfect metrics and zero success") {
  auto& fx = fixture();
  const TextureMap clean = benign_texture(16, 16);
  EvalOptions opt;
  MockJudge judge;
  opt.judge = &judge;
  opt.max_samples = 6;
  const EvalReport r = evaluate_run(clean, clean, fx.manifest, fx.victim, default_prompt_set(), opt);
  CHECK(r.records.size() == 6 * 9);
  for (const auto& x : r.records) {
    CHECK(x.bleu == 1.0);
    CHECK(x.meteor == 1.0);
    CHECK(x.rouge == 1.0);
    CHECK(!x.success);
    REQUIRE(x.judge.has_value());
    CHECK(*x.judge == JudgeScores{10, 10, 10});
  }
  for (const auto& [s, rate] : r.scenario_rate) CHECK(rate == 0.0);
  CHECK(r.overall_rate == 0.0);
  CHECK(r.universality == 0.0);
  CHECK(!r.incomplete);
  CHECK(r.mean_layer_cosine.at("projector") == doctest::Approx(1.0));
}

TEST_CASE("single sample, single prompt gives one record") {
  auto& fx = fixture();
  DatasetManifest one = fx.manifest;
  one.entries.resize(1);
  PromptSet ps;
  ps.version = "t";
  ps.prompts[Scenario::Planning] = {"What should the ego vehicle do next?"};
  ps.prompts[Scenario::Prediction] = {};
  ps.prompts[Scenario::Perception] = {};
  const TextureMap adv(uca::testing::random_image(16, 16, 3, 1));
  const EvalReport r = evaluate_run(adv, benign_texture(16, 16), one, fx.victim, ps);
  CHECK(r.records.size() == 1);
  CHECK(r.feature_cosines.size() == 1);
}

TEST_CASE("evaluation is identical across thread counts") {
  auto& fx = fixture();
  const TextureMap adv(uca::testing::random_image(16, 16, 3, 2));
  EvalOptions one, four;
  one.max_samples = four.max_samples = 12;
  four.threads = 4;
  const auto a = evaluate_run(adv, benign_texture(16, 16), fx.manifest, fx.victim, default_prompt_set(), one);
  const auto b = evaluate_run(adv, benign_texture(16, 16), fx.manifest, fx.victim, default_prompt_set(), four);
  CHECK(summary_json(a) == summary_json(b));
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(record_json(a.records[i]) == record_json(b.records[i]));
}

TEST_CASE("aggregates are means of the success flags") {
  EvalReport r;
  r.records = {rec("a", Scenario::Planning, true, 5.0, 22.5),   rec("a", Scenario::Prediction, true, 5.0, 22.5),
               rec("a", Scenario::Perception, true, 5.0, 22.5), rec("b", Scenario::Planning, false, 10.0, 45.0),
               rec("b", Scenario::Prediction, true, 10.0, 45.0), rec("b", Scenario::Perception, false, 10.0, 45.0),
               rec("c", Scenario::Planning, false, 10.0, 45.0)};
  aggregate(r);
  CHECK(r.scenario_rate.at(Scenario::Planning) == doctest::Approx(1.0 / 3.0));
  CHECK(r.scenario_rate.at(Scenario::Prediction) == doctest::Approx(1.0));
  CHECK(r.scenario_rate.at(Scenario::Perception) == doctest::Approx(0.5));
  CHECK(r.overall_rate == doctest::Approx((1.0 / 3.0 + 1.0 + 0.5) / 3.0));
  CHECK(r.universality == doctest::Approx(1.0 / 3.0));
  CHECK(r.distance_rate.at(5.0) == 1.0);
  CHECK(r.distance_rate.at(10.0) == doctest::Approx(0.25));
  CHECK(r.pitch_rate.at(22.5) == 1.0);
  CHECK(r.mean_bleu == doctest::Approx(3.0 / 7.0));
}

TEST_CASE("judge failures never block the metric pipeline") {
  auto& fx = fixture();
  const TextureMap adv(uca::testing::random_image(16, 16, 3, 3));
  BrokenJudge broken;
  EvalOptions opt;
  opt.judge = &broken;
  opt.max_samples = 3;
  const auto r = evaluate_run(adv, benign_texture(16, 16), fx.manifest, fx.victim, default_prompt_set(), opt);
  CHECK(r.records.size() == 27);
  CHECK(broken.calls == 1);  // disabled after the first outage
  CHECK(r.judge_failures == 27);
  CHECK(!r.mean_judge.has_value());
  for (const auto& x : r.records) {
    CHECK(!x.judge.has_value());
    CHECK(x.bleu >= 0.0);
  }

  GarbledJudge garbled;
  opt.judge = &garbled;
  const auto g = evaluate_run(adv, benign_texture(16, 16), fx.manifest, fx.victim, default_prompt_set(), opt);
  CHECK(g.judge_failures == 27);
  CHECK(g.records.front().judge_error.find("ParseError") != std::string::npos);
}

TEST_CASE("unreadable samples flag the report incomplete") {
  auto& fx = fixture();
  TempDir dir;
  DatasetManifest m = fx.manifest;
  m.entries.resize(2);
  std::filesystem::copy_file(m.entries[1].mask_path, dir / "mask.png");
  std::ofstream(dir / "mask.png", std::ios::trunc) << "broken";
  m.entries[1].mask_path = dir / "mask.png";
  const auto r = evaluate_run(benign_texture(16, 16), benign_texture(16, 16), m, fx.victim, default_prompt_set());
  CHECK(r.incomplete);
  CHECK(r.failed_samples == std::vector<std::string>{m.entries[1].sample_id});
  CHECK(r.records.size() == 9);
}

TEST_CASE("held-out manifests must not share rasters with training") {
  auto& fx = fixture();
  CHECK_THROWS_AS(require_disjoint(fx.manifest, fx.manifest), PreconditionError);
  TempDir other;
  const auto held = uca::testing::small_dataset(other.path(), 1, 32, 99).manifest;
  CHECK_NOTHROW(require_disjoint(fx.manifest, held));
}

TEST_CASE("reports and plots land on disk") {
  auto& fx = fixture();
  TempDir dir;
  EvalOptions opt;
  opt.max_samples = 4;
  const auto r = evaluate_run(TextureMap(uca::testing::random_image(16, 16, 3, 4)), benign_texture(16, 16),
                              fx.manifest, fx.victim, default_prompt_set(), opt);
  write_report(r, dir / "report");
  CHECK(std::filesystem::exists(dir / "report" / "records.jsonl"));
  std::ifstream in(dir / "report" / "summary.json");
  const auto s = nlohmann::json::parse(in);
  CHECK(s.at("success_rate").contains("overall"));
  CHECK(s.contains("success_by_distance"));
  CHECK(s.contains("universality"));

  const auto files = plot_reports({dir / "report" / "summary.json"}, {"adv"}, dir / "plots");
  CHECK(files.size() == 2);
  for (const auto& f : files) {
    std::ifstream svg(f);
    std::string head;
    std::getline(svg, head);
    CHECK(head.find("<svg") != std::string::npos);
  }
  const std::string bar = bar_chart_svg("t", "x", {"a", "b"}, {{"s", {0.5, 1.0}}});
  CHECK(bar.find("<rect") != std::string::npos);
}
