#include <doctest.h>

#include <fstream>

#include "test_support.hpp"
#include "uca/error.hpp"
#include "uca/view_sampler.hpp"

using namespace uca;
using uca::testing::TempDir;

namespace {

// One shared 48 px dataset (48 entries) for the sampling tests.
const DatasetManifest& shared_manifest() {
  static TempDir dir("uca-vs");
  static const DatasetManifest m = [] {
    uca::testing::small_dataset(dir.path(), 1, 48);
    return load_manifest(dir / "manifest.jsonl");
  }();
  return m;
}

std::map<double, int> pitch_counts(const DatasetManifest& m, const SamplingPolicy& policy, int draws) {
  Rng rng(policy.seed);
  std::map<double, int> counts;
  SamplingPolicy p = policy;
  p.batch_size = 100;
  const auto schedule = default_schedule(48, 48);
  for (int i = 0; i < draws / p.batch_size; ++i)
    for (const auto& item : sample_batch(m, p, schedule, rng)) ++counts[m.entries[item.entry].pose.pitch_deg];
  return counts;
}

}  // namespace

TEST_CASE("manifest loading") {
  const DatasetManifest& m = shared_manifest();
  CHECK(m.size() == 48);
  for (const auto& e : m.entries) {
    CHECK(m.pose_grid.contains(e.pose));
    CHECK(std::filesystem::exists(e.background_path));
  }

  TempDir dir;
  DatasetManifest one;
  one.entries.push_back(m.entries.front());
  save_manifest(one, dir / "one.jsonl");
  CHECK(load_manifest(dir / "one.jsonl").size() == 1);

  DatasetManifest off = one;
  off.entries[0].pose.pitch_deg = 30.0;
  save_manifest(off, dir / "off.jsonl");
  CHECK_THROWS_AS(load_manifest(dir / "off.jsonl"), FormatError);

  DatasetManifest dangling = one;
  dangling.entries[0].mask_path = dir / "nowhere.png";
  save_manifest(dangling, dir / "dangling.jsonl");
  CHECK_THROWS_AS(load_manifest(dir / "dangling.jsonl"), MissingFile);

  std::ofstream(dir / "bad.jsonl") << "{\"sample_id\": 3\n";
  CHECK_THROWS_AS(load_manifest(dir / "bad.jsonl"), FormatError);
  CHECK_THROWS_AS(load_manifest(dir / "absent.jsonl"), MissingFile);

  // Unknown fields are tolerated.
  {
    std::ifstream in(dir / "one.jsonl");
    std::string line, out;
    while (std::getline(in, line)) {
      if (line.find("\"sample_id\"") != std::string::npos) line.insert(1, "\"extra\": 1, ");
      out += line + "\n";
    }
    std::ofstream(dir / "extra.jsonl") << out;
  }
  CHECK(load_manifest(dir / "extra.jsonl").size() == 1);
}

TEST_CASE("3:1:1 and 1:1:1 pitch frequencies") {
  const DatasetManifest& m = shared_manifest();
  SamplingPolicy skew;
  skew.seed = 11;
  const auto c = pitch_counts(m, skew, 10000);
  CHECK(std::abs(c.at(22.5) / 10000.0 - 0.6) <= 0.02);
  CHECK(std::abs(c.at(45.0) / 10000.0 - 0.2) <= 0.02);
  CHECK(std::abs(c.at(67.5) / 10000.0 - 0.2) <= 0.02);

  SamplingPolicy flat;
  flat.pitch_weights = {{22.5, 1.0}, {45.0, 1.0}, {67.5, 1.0}};
  flat.seed = 12;
  const auto u = pitch_counts(m, flat, 10000);
  for (const auto& [p, n] : u) CHECK(std::abs(n / 10000.0 - 1.0 / 3.0) <= 0.02);
}

TEST_CASE("within a pitch class every (distance, yaw) cell is equally likely") {
  const DatasetManifest& m = shared_manifest();
  SamplingPolicy only;
  only.pitch_weights = {{45.0, 1.0}};
  only.batch_size = 200;
  only.seed = 3;
  Rng rng(3);
  std::map<std::string, int> cells;
  const int n = 16000;
  for (int i = 0; i < n / only.batch_size; ++i)
    for (const auto& item : sample_batch(m, only, identity_schedule(48, 48), rng)) {
      const auto& pose = m.entries[item.entry].pose;
      CHECK(pose.pitch_deg == 45.0);
      ++cells[std::to_string(pose.distance_m) + std::string(yaw_name(pose.yaw))];
    }
  REQUIRE(cells.size() == 16);
  const double expected = n / 16.0;
  double chi2 = 0.0;
  for (const auto& [k, obs] : cells) chi2 += (obs - expected) * (obs - expected) / expected;
  // 15 degrees of freedom: the 0.99 quantile is 30.58.
  CHECK(chi2 < 30.58);
}

TEST_CASE("sampling is deterministic and validates the policy") {
  const DatasetManifest& m = shared_manifest();
  SamplingPolicy p;
  p.batch_size = 8;
  Rng a(5), b(5);
  for (int i = 0; i < 20; ++i) {
    const auto x = sample_batch(m, p, default_schedule(48, 48), a);
    const auto y = sample_batch(m, p, default_schedule(48, 48), b);
    REQUIRE(x.size() == 8);
    for (std::size_t k = 0; k < x.size(); ++k) {
      CHECK(x[k].entry == y[k].entry);
      CHECK(x[k].transform == y[k].transform);
      CHECK(x[k].entry < m.size());
    }
  }

  DatasetManifest no_high;
  no_high.pose_grid = m.pose_grid;
  no_high.root = m.root;
  for (const auto& e : m.entries)
    if (e.pose.pitch_deg != 67.5) no_high.entries.push_back(e);
  Rng r(1);
  CHECK_THROWS_AS(sample_batch(no_high, p, default_schedule(48, 48), r), EmptyPitchClass);

  SamplingPolicy off = p;
  off.pitch_weights[30.0] = 1.0;
  CHECK_THROWS_AS(sample_batch(m, off, default_schedule(48, 48), r), PreconditionError);

  SamplingPolicy bad = p;
  bad.pitch_weights[45.0] = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = p;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sample cache returns decoded samples") {
  const DatasetManifest& m = shared_manifest();
  SampleCache cache(2);
  const SceneSample& s = cache.get(m, 3);
  CHECK(s.sample_id == m.entries[3].sample_id);
  cache.get(m, 4);
  cache.get(m, 5);
  CHECK(cache.get(m, 3).sample_id == m.entries[3].sample_id);
}
