#include <doctest.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using uca::testing::TempDir;

namespace {

struct Outcome {
  int code = -1;
  std::string out;  // stdout and stderr together
};

Outcome uca_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + UCA_CLI_PATH + "\" --log-level warn " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) o.out += buf.data();
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  return json::parse(in);
}

std::string digest_line(const std::string& out) {
  std::smatch m;
  REQUIRE(std::regex_search(out, m, std::regex("manifest sha256 ([0-9a-f]{64})")));
  return m[1];
}

// One small dataset reused by the slower cases.
struct Shared {
  TempDir dir{"uca-cli"};
  fs::path manifest;
  fs::path held_out;
  Shared() {
    const auto a = uca_cli("dataset -o " + q(dir / "train") + " --size 32 --variants 1 --seed 3");
    REQUIRE(a.code == 0);
    const auto b = uca_cli("dataset -o " + q(dir / "held") + " --size 32 --variants 1 --seed 4");
    REQUIRE(b.code == 0);
    manifest = dir / "train" / "manifest.jsonl";
    held_out = dir / "held" / "manifest.jsonl";
  }
};

Shared& shared() {
  static Shared s;
  return s;
}

}  // namespace

TEST_CASE("version flag") {
  const auto o = uca_cli("--version");
  CHECK(o.code == 0);
  CHECK(!o.out.empty());
}

TEST_CASE("dataset reports the entry count and a stable digest") {
  TempDir dir;
  const auto a = uca_cli("dataset -o " + q(dir / "a") + " --size 24 --seed 11");
  REQUIRE(a.code == 0);
  CHECK(a.out.find("480 entries") != std::string::npos);
  const auto b = uca_cli("dataset -o " + q(dir / "b") + " --size 24 --seed 11");
  REQUIRE(b.code == 0);
  CHECK(digest_line(a.out) == digest_line(b.out));
  CHECK(fs::exists(dir / "a" / "provenance.json"));
  // The manifest lists paths and poses only; the seed shows up in the rasters.
  const auto c = uca_cli("dataset -o " + q(dir / "c") + " --size 24 --seed 12");
  REQUIRE(c.code == 0);
  const auto first_bg = [&](const char* sub) {
    std::ifstream in(dir / sub / "manifest.jsonl");
    std::string line;
    std::getline(in, line);  // pose grid header
    std::getline(in, line);
    fs::path bg = json::parse(line).at("background_path").get<std::string>();
    if (bg.is_relative()) bg = dir / sub / bg;
    std::ifstream f(bg, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  CHECK(first_bg("a") == first_bg("b"));
  CHECK(first_bg("a") != first_bg("c"));
}

TEST_CASE("dataset rejects an off-grid pitch") {
  TempDir dir;
  const auto o = uca_cli("dataset -o " + q(dir / "x") + " --pitches 95");
  CHECK(o.code != 0);
  CHECK(o.out.find("pitch") != std::string::npos);
}

TEST_CASE("attack without a manifest names the missing key") {
  TempDir dir;
  const auto o = uca_cli("attack -o " + q(dir / "run"));
  CHECK(o.code == 2);
  CHECK(o.out.find("paths.manifest") != std::string::npos);
}

TEST_CASE("attack records overrides in provenance") {
  auto& s = shared();
  TempDir dir;
  const auto o = uca_cli("attack -m " + q(s.manifest) + " -o " + q(dir / "run") +
                         " --lr 0.1 --epochs 5 --max-steps 2 --batch-size 2 --set texture.size=32");
  REQUIRE(o.code == 0);
  const json p = read_json(dir / "run" / "provenance.json");
  const auto& ov = p.at("overrides");
  CHECK(std::find(ov.begin(), ov.end(), "optimizer.learning_rate=0.1") != ov.end());
  CHECK(std::find(ov.begin(), ov.end(), "optimizer.epochs=5") != ov.end());
  CHECK(fs::exists(dir / "run" / "texture_final.png"));
  CHECK(fs::exists(dir / "run" / "loss_log.jsonl"));

  const auto plot = uca_cli("plot --loss " + q(dir / "run") + " -o " + q(dir / "plots"));
  CHECK(plot.code == 0);
  CHECK(fs::exists(dir / "plots" / "loss_curve.svg"));
}

TEST_CASE("smoke attack finishes within a minute") {
  auto& s = shared();
  TempDir dir;
  const auto t0 = std::chrono::steady_clock::now();
  const auto o = uca_cli("attack --smoke -m " + q(s.manifest) + " -o " + q(dir / "run"));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(o.code == 0);
  CHECK(o.out.find("10 iterations") != std::string::npos);
  CHECK(secs < 60.0);
}

TEST_CASE("eval with the mock judge and the clean baseline") {
  auto& s = shared();
  TempDir dir;
  const auto o = uca_cli("eval --baseline clean --judge mock --max-samples 3 -m " + q(s.held_out) +
                         " --train-manifest " + q(s.manifest) + " -o " + q(dir / "clean"));
  REQUIRE(o.code == 0);
  const json sum = read_json(dir / "clean" / "summary.json");
  CHECK(sum.at("success_rate").at("overall").get<double>() == 0.0);
  CHECK(fs::exists(dir / "clean" / "records.jsonl"));

  const auto r = uca_cli("eval --baseline random --judge mock --max-samples 3 -m " + q(s.held_out) + " -o " +
                         q(dir / "random"));
  REQUIRE(r.code == 0);

  const auto plot = uca_cli("plot -r " + q(dir / "clean") + " -r " + q(dir / "random") +
                            " -l clean -l random -o " + q(dir / "plots"));
  REQUIRE(plot.code == 0);
  int svgs = 0;
  for (const auto& e : fs::directory_iterator(dir / "plots")) svgs += e.path().extension() == ".svg";
  CHECK(svgs >= 2);

  // Training and held-out sets must not be the same rasters.
  const auto same = uca_cli("eval --baseline clean --judge none --max-samples 1 -m " + q(s.manifest) +
                            " --train-manifest " + q(s.manifest) + " -o " + q(dir / "same"));
  CHECK(same.code != 0);
}

TEST_CASE("eval needs a texture or a baseline") {
  const auto o = uca_cli("eval --judge none");
  CHECK(o.code == 2);
}

TEST_CASE("sweep grid validation and a two-cell run") {
  auto& s = shared();
  TempDir dir;
  const auto empty = uca_cli("sweep -m " + q(s.manifest) + " -o " + q(dir / "none"));
  CHECK(empty.code == 2);

  const auto o = uca_cli("sweep -g delta=0.7,0.8 -m " + q(s.manifest) + " -e " + q(s.held_out) + " -o " +
                         q(dir / "sw") +
                         " --set optimizer.max_steps=1 --set sampling.batch_size=1 --set texture.size=16"
                         " --set eval.max_samples=1 --set eval.judge=none");
  REQUIRE(o.code == 0);
  int cells = 0;
  for (const auto& e : fs::directory_iterator(dir / "sw")) cells += e.is_directory();
  CHECK(cells == 2);
  CHECK(fs::exists(dir / "sw" / "comparison.md"));
  CHECK(fs::exists(dir / "sw" / "comparison.csv"));
}
