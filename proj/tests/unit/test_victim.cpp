#include <doctest.h>

#include <fstream>

#include "test_support.hpp"
#include "uca/error.hpp"
#include "uca/eval/evaluate.hpp"
#include "uca/surrogate.hpp"
#include "uca/victim.hpp"

using namespace uca;
using uca::testing::TempDir;
using uca::eval::PromptSet;
using uca::eval::default_prompt_set;

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

const SurrogateVictim& default_surrogate() {
  static const SurrogateVictim v;
  return v;
}

}  // namespace

TEST_CASE("surrogate exposes encoder and projector with the documented shapes") {
  const auto& v = default_surrogate();
  CHECK(v.exposed_layers() == std::vector<std::string>{"encoder", "projector"});
  const FeatureStack fs = extract_features(v, uca::testing::random_image(224, 224, 3, 1));
  CHECK(fs.layer("encoder").rows() == 196);
  CHECK(fs.layer("encoder").cols() == 64);
  CHECK(fs.layer("projector").rows() == 32);
  CHECK(fs.layer("projector").cols() == 128);
  CHECK(fs.provenance.rfind("surrogate@", 0) == 0);
  CHECK_THROWS_AS(fs.layer("decoder"), LayerNotExposed);

  const std::vector<std::string> want{"projector"};
  const FeatureStack only = extract_features(v, uca::testing::random_image(224, 224, 3, 1), want);
  CHECK(only.names() == want);
  const std::vector<std::string> bad{"nope"};
  CHECK_THROWS_AS(extract_features(v, uca::testing::random_image(224, 224, 3, 1), bad), LayerNotExposed);
}

TEST_CASE("feature extraction is deterministic and resizes other frame sizes") {
  const auto& v = default_surrogate();
  const Image img = uca::testing::random_image(96, 128, 3, 2);
  const FeatureStack a = extract_features(v, img), b = extract_features(v, img);
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    CHECK(std::equal(a.layers[l].values.values().begin(), a.layers[l].values.values().end(),
                     b.layers[l].values.values().begin()));
  CHECK(a.provenance == b.provenance);
}

TEST_CASE("features_backward matches finite differences on a small surrogate") {
  const SurrogateVictim v(tiny_config());
  Image img = uca::testing::random_image(20, 24, 3, 3);
  const FeatureTrace trace = extract_features_traced(v, img);
  FeatureStack w = trace.features.zeros_like();
  std::uint64_t seed = 40;
  for (auto& l : w.layers) l.values = uca::testing::random_matrix(l.values.rows(), l.values.cols(), seed++);
  auto f = [&] {
    const FeatureStack fs = extract_features(v, img);
    double s = 0.0;
    for (std::size_t l = 0; l < fs.layers.size(); ++l)
      for (std::size_t i = 0; i < fs.layers[l].values.size(); ++i)
        s += w.layers[l].values.values()[i] * fs.layers[l].values.values()[i];
    return s;
  };
  const Image g = features_backward(v, trace, w);
  REQUIRE(g.same_shape(img));
  Rng pick(5);
  for (int k = 0; k < 40; ++k) {
    const auto idx = static_cast<std::size_t>(uniform01(pick) * static_cast<double>(img.size()));
    const double fd = uca::testing::central_difference(f, img.values()[idx], 1e-5);
    CHECK(uca::testing::rel_error(g.values()[idx], fd, 1e-5) < 1e-4);
  }
}

TEST_CASE("gradient reaches the texture through the rendered mask") {
  TempDir dir;
  const auto report = uca::testing::small_dataset(dir.path(), 1, 64);
  const SceneSample s = load_sample(report.manifest.entries.front());
  const auto& v = default_surrogate();
  const TextureMap tex(uca::testing::random_image(32, 32, 3, 6));
  const Image frame = render(s, tex);
  const FeatureTrace trace = extract_features_traced(v, frame);
  FeatureStack w = trace.features.zeros_like();
  for (auto& l : w.layers) l.values = uca::testing::random_matrix(l.values.rows(), l.values.cols(), 8);
  const Image g_img = features_backward(v, trace, w);
  Image g_tex(32, 32, 3);
  render_backward(s, g_img, g_tex);
  double norm = 0.0;
  for (double x : g_tex.values()) norm += x * x;
  CHECK(norm > 0.0);
}

TEST_CASE("generate is stable and rejects blank prompts") {
  const auto& v = default_surrogate();
  const Image img = uca::testing::random_image(224, 224, 3, 9);
  const std::string a = generate(v, img, "What should the ego vehicle do next?");
  CHECK(!a.empty());
  CHECK(a == generate(v, img, "What should the ego vehicle do next?"));
  CHECK_THROWS_AS(generate(v, img, ""), PreconditionError);
  CHECK_THROWS_AS(generate(v, img, "  \n"), PreconditionError);

  const PromptSet ps = default_prompt_set();
  std::vector<std::string> all;
  for (const auto& [sc, list] : ps.prompts) all.insert(all.end(), list.begin(), list.end());
  const auto many = generate_many(v, img, all);
  REQUIRE(many.size() == all.size());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(many[i] == generate(v, img, all[i]));
  const std::vector<std::string> blank{"ok?", " "};
  CHECK_THROWS_AS(generate_many(v, img, blank), PreconditionError);
}

TEST_CASE("prompt routing and the shipped prompt set agree") {
  const PromptSet ps = default_prompt_set();
  for (const auto& [sc, list] : ps.prompts)
    for (const auto& p : list) {
      CAPTURE(p);
      CHECK(route_prompt(p) == sc);
    }
  for (Scenario s : kAllScenarios) {
    CHECK(surrogate_answers(s).size() == 5);
    CHECK(parse_scenario(scenario_name(s)) == s);
  }
  CHECK_THROWS_AS(parse_scenario("parking"), ConfigError);
}

TEST_CASE("feature_stats: stub is all zero, surrogate separates textured frames") {
  const StubVictim stub;
  const std::vector<Image> imgs{uca::testing::random_image(8, 8, 3, 1)};
  for (const auto& st : feature_stats(stub, imgs)) {
    CHECK(st.mean == 0.0);
    CHECK(st.variance == 0.0);
  }
  CHECK_THROWS_AS(feature_stats(stub, std::span<const Image>{}), PreconditionError);

  const auto& v = default_surrogate();
  const std::vector<Image> flat{Image(224, 224, 3, 0.5)};
  const std::vector<Image> noisy{uca::testing::random_image(224, 224, 3, 2)};
  const auto a = feature_stats(v, flat), b = feature_stats(v, noisy);
  REQUIRE(a.size() == b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || std::abs(a[i].mean - b[i].mean) > 0.0;
  CHECK(differs);
}

TEST_CASE("victim registry") {
  auto& reg = VictimRegistry::instance();
  CHECK(reg.contains("surrogate"));
  CHECK(reg.contains("stub"));
  CHECK_THROWS_AS(reg.create("nonexistent"), VictimUnavailable);
  CHECK_THROWS_AS(reg.create("llava"), VictimUnavailable);
  const auto stub = reg.create("stub");
  CHECK(stub->spec().name == "stub");
}

TEST_CASE("surrogate checkpoints round trip and refuse other versions") {
  TempDir dir;
  const SurrogateVictim v(tiny_config());
  v.save(dir / "s.bin");
  const SurrogateVictim back = SurrogateVictim::load(dir / "s.bin");
  const Image img = uca::testing::random_image(32, 32, 3, 11);
  const FeatureStack a = extract_features(v, img), b = extract_features(back, img);
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    CHECK(std::equal(a.layers[l].values.values().begin(), a.layers[l].values.values().end(),
                     b.layers[l].values.values().begin()));

  const auto created = VictimRegistry::instance().create("surrogate", {{"weights", (dir / "s.bin").string()}});
  CHECK(created->spec().input_height == 32);

  {
    std::fstream f(dir / "s.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t bogus = 99;
    f.write(reinterpret_cast<const char*>(&bogus), sizeof bogus);
  }
  CHECK_THROWS_AS(SurrogateVictim::load(dir / "s.bin"), VersionError);
  CHECK_THROWS_AS(SurrogateVictim::load(dir / "absent.bin"), MissingFile);
}
