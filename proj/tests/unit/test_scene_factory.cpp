#include <doctest.h>

#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "uca/digest.hpp"
#include "uca/error.hpp"
#include "uca/scene_factory.hpp"

using namespace uca;
using uca::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("default grid yields 480 entries and matched 5 m / 10 m pairs") {
  GridSpec g;
  CHECK(g.total() == 480);
  g.image_height = g.image_width = 40;
  TempDir dir;
  const DatasetReport rep = generate_dataset(load_obj(uca::testing::toy_car_path()), g, dir.path(), 3);
  CHECK(rep.skipped == 0);
  CHECK(rep.manifest.size() == 480);
  const DatasetManifest back = load_manifest(dir / "manifest.jsonl");
  CHECK(back.size() == g.total());

  std::map<std::string, std::size_t> near;
  for (const auto& e : back.entries)
    if (e.pose.distance_m == 5.0) near[e.sample_id.substr(4)] = read_mask_png(e.mask_path).count();
  int pairs = 0;
  for (const auto& e : back.entries) {
    if (e.pose.distance_m != 10.0) continue;
    const auto it = near.find(e.sample_id.substr(4));
    REQUIRE(it != near.end());
    CHECK(it->second > read_mask_png(e.mask_path).count());
    ++pairs;
  }
  CHECK(pairs == 240);
}

TEST_CASE("single-cell grid yields one entry") {
  GridSpec g;
  g.distances_m = {5.0};
  g.pitches_deg = {45.0};
  g.yaws = {Yaw::West};
  g.variants_per_pose = 1;
  g.image_height = g.image_width = 32;
  TempDir dir;
  const auto rep = generate_dataset(load_obj(uca::testing::toy_car_path()), g, dir.path(), 1);
  CHECK(rep.manifest.size() == 1);
  CHECK(rep.manifest.entries[0].sample_id == sample_id_for(CameraPose{5.0, 45.0, Yaw::West}, 0));
  const SceneSample s = load_sample(rep.manifest.entries[0]);
  CHECK(s.background.height() == 32);
  CHECK(s.mask.count() > 0);
}

TEST_CASE("grid validation") {
  GridSpec g;
  g.pitches_deg = {};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = GridSpec{};
  g.pitches_deg = {95.0};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = GridSpec{};
  g.distances_m = {-1.0};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = GridSpec{};
  g.variants_per_pose = 0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("generation is byte-reproducible under a fixed seed") {
  TempDir a, b, c;
  uca::testing::small_dataset(a.path(), 1, 32, 21);
  uca::testing::small_dataset(b.path(), 1, 32, 21);
  uca::testing::small_dataset(c.path(), 1, 32, 22);
  CHECK(slurp(a / "manifest.jsonl").size() > 0);
  const auto ma = load_manifest(a / "manifest.jsonl");
  const auto mb = load_manifest(b / "manifest.jsonl");
  bool any_diff = false;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    CHECK(ma.entries[i].sample_id == mb.entries[i].sample_id);
    CHECK(slurp(ma.entries[i].background_path) == slurp(mb.entries[i].background_path));
    CHECK(slurp(ma.entries[i].uv_map_path) == slurp(mb.entries[i].uv_map_path));
    any_diff = any_diff || slurp(ma.entries[i].background_path) !=
                               slurp(c / "backgrounds" / (ma.entries[i].sample_id + ".png"));
  }
  CHECK(slurp(a / "manifest.jsonl") == slurp(b / "manifest.jsonl"));
  CHECK(any_diff);
}

TEST_CASE("preview writes the composite") {
  TempDir dir;
  const auto rep = uca::testing::small_dataset(dir.path(), 1, 32);
  const SceneSample s = load_sample(rep.manifest.entries[0]);

  preview(s, benign_texture(64, 64), dir / "clean.png");
  preview(s, TextureMap(uca::testing::random_image(64, 64, 3, 2)), dir / "adv.png");
  const Image clean = read_image_png(dir / "clean.png");
  CHECK(clean.height() == 32);
  CHECK(clean.width() == 32);
  CHECK(slurp(dir / "clean.png") != slurp(dir / "adv.png"));

  SceneSample empty = s;
  empty.mask = Mask(32, 32);
  preview(empty, benign_texture(64, 64), dir / "empty.png");
  write_image_png(s.background, dir / "bg.png");
  CHECK(slurp(dir / "empty.png") == slurp(dir / "bg.png"));
}

TEST_CASE("benign paint stays in range") {
  const TextureMap t = benign_texture(48, 64);
  for (double v : t.texels().values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(benign_texture(0, 3), ShapeError);
}
