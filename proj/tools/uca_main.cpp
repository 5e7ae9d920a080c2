// uca: dataset generation, attack runs, evaluation, sweeps and plots.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "uca/config.hpp"
#include "uca/digest.hpp"
#include "uca/error.hpp"
#include "uca/eval/plots.hpp"
#include "uca/pipeline.hpp"
#include "uca/scene_factory.hpp"
#include "uca/sweep.hpp"

namespace fs = std::filesystem;
using namespace uca;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFailure = 1;

fs::path default_mesh() {
  const fs::path local = "assets/toy_car.obj";
  if (fs::exists(local)) return local;
#ifdef UCA_SOURCE_DIR
  return fs::path(UCA_SOURCE_DIR) / "assets" / "toy_car.obj";
#else
  return local;
#endif
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("{} entry '{}' is not a number", what, item));
    }
  }
  if (out.empty()) throw ConfigError(fmt::format("{} list is empty", what));
  return out;
}

// Options shared by attack, eval and sweep: config file plus overrides.
struct ConfigFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string seed;

  void add(CLI::App* app) {
    app->add_option("-c,--config", config, "Run configuration file (JSON, see docs/config.md)");
    app->add_option("--set", sets, "Override a config key, e.g. --set attack.delta=0.7 (repeatable)");
    app->add_option("--seed", seed, "Master seed (config key seed)");
  }

  CliConfig load() const {
    CliConfig c = config.empty() ? CliConfig{} : load_config(config);
    if (!seed.empty()) apply_override(c, "seed", seed);
    for (const auto& s : sets) apply_override(c, s);
    return c;
  }
};

void set_if(CliConfig& c, const std::string& key, const std::string& value) {
  if (!value.empty()) apply_override(c, key, value);
}

void set_path_if(CliConfig& c, const std::string& key, const std::string& value) {
  if (!value.empty()) apply_override(c, key, nlohmann::json(fs::absolute(value).lexically_normal().string()).dump());
}

// ---------------------------------------------------------------- dataset

struct DatasetCmd {
  std::string out, mesh, distances, pitches;
  std::uint64_t seed = 0;
  int variants = 10, size = 224;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("dataset", "Render the pose-gridded training or evaluation set");
    c->add_option("-o,--out", out, "Output directory")->required();
    c->add_option("--mesh", mesh, "Vehicle mesh (OBJ); defaults to assets/toy_car.obj");
    c->add_option("--seed", seed, "Background seed");
    c->add_option("--variants", variants, "Background variants per pose")->capture_default_str();
    c->add_option("--distances", distances, "Comma-separated capture distances in metres (default 5,10)");
    c->add_option("--pitches", pitches, "Comma-separated pitch angles in degrees (default 22.5,45,67.5)");
    c->add_option("--size", size, "Image height and width in pixels")->capture_default_str();
    c->callback([this] { exec(); });
  }

  void exec() const {
    GridSpec grid;
    if (!distances.empty()) grid.distances_m = parse_list(distances, "distance");
    if (!pitches.empty()) grid.pitches_deg = parse_list(pitches, "pitch");
    grid.variants_per_pose = variants;
    grid.image_height = grid.image_width = size;
    grid.validate();
    const Mesh m = load_obj(mesh.empty() ? default_mesh() : fs::path(mesh));
    const DatasetReport rep = generate_dataset(m, grid, out, seed);
    const fs::path manifest = fs::path(out) / "manifest.jsonl";
    const std::string digest = sha256_file(manifest);
    CliConfig cfg;
    cfg.run.seed = seed;
    cfg.run_id = make_run_id(seed);
    write_provenance(cfg, out, "dataset", {manifest},
                     {{"grid",
                       {{"distances_m", grid.distances_m},
                        {"pitches_deg", grid.pitches_deg},
                        {"variants_per_pose", grid.variants_per_pose},
                        {"image_size", size}}},
                      {"entries", rep.manifest.size()},
                      {"skipped", rep.skipped}});
    fmt::print("{} entries ({} skipped) -> {}\nmanifest sha256 {}\n", rep.manifest.size(), rep.skipped,
               manifest.string(), digest);
  }
};

// ---------------------------------------------------------------- attack

struct AttackCmd {
  ConfigFlags flags;
  std::string manifest, out, lr, epochs, optimizer, max_steps, batch, threads;
  bool resume = false, smoke = false;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("attack", "Optimise an adversarial texture");
    flags.add(c);
    c->add_option("-m,--manifest", manifest, "Training manifest (paths.manifest)");
    c->add_option("-o,--out", out, "Run directory (default <paths.output_dir>/<run id>)");
    c->add_option("--lr", lr, "Learning rate (optimizer.learning_rate)");
    c->add_option("--epochs", epochs, "Epochs (optimizer.epochs)");
    c->add_option("--optimizer", optimizer, "gd, momentum or adam (optimizer.kind)");
    c->add_option("--max-steps", max_steps, "Stop after this many iterations (optimizer.max_steps)");
    c->add_option("--batch-size", batch, "Views per step (sampling.batch_size)");
    c->add_option("--threads", threads, "Worker threads per step (run.threads)");
    c->add_flag("--resume", resume, "Continue from the newest checkpoint in the run directory");
    c->add_flag("--smoke", smoke, "One sample, ten steps: a quick end-to-end check");
    c->callback([this] { exec(); });
  }

  void exec() const {
    CliConfig cfg = flags.load();
    set_path_if(cfg, "paths.manifest", manifest);
    set_if(cfg, "optimizer.learning_rate", lr);
    set_if(cfg, "optimizer.epochs", epochs);
    set_if(cfg, "optimizer.kind", optimizer);
    set_if(cfg, "optimizer.max_steps", max_steps);
    set_if(cfg, "sampling.batch_size", batch);
    set_if(cfg, "run.threads", threads);
    if (cfg.manifest.empty()) throw ConfigError("paths.manifest is not set (use --manifest or the config file)");
    cfg.run_id = make_run_id(cfg.run.seed);
    const fs::path run_dir = out.empty() ? cfg.output_dir / cfg.run_id : fs::path(out);
    if (smoke) {
      DatasetManifest m = load_manifest(cfg.manifest);
      if (m.empty()) throw PreconditionError("manifest has no entries");
      m.entries.resize(1);
      fs::create_directories(run_dir);
      const fs::path smoke_manifest = fs::absolute(run_dir / "smoke_manifest.jsonl");
      save_manifest(m, smoke_manifest);
      apply_override(cfg, "paths.manifest", nlohmann::json(smoke_manifest.string()).dump());
      apply_override(cfg, "sampling.pitch_weights",
                     nlohmann::json{{nlohmann::json(m.entries[0].pose.pitch_deg).dump(), 1.0}}.dump());
      apply_override(cfg, "sampling.batch_size", "1");
      apply_override(cfg, "optimizer.max_steps", "10");
      apply_override(cfg, "optimizer.epochs", "10");
    }
    const RunResult r = attack_from_config(cfg, run_dir, resume);
    const auto& last = r.state.loss_history.back();
    fmt::print("run {} finished: {} iterations, final loss {:.6g} (divergence {:.6g}, smoothness {:.6g})\n{}\n",
               cfg.run_id, r.state.iteration, last.total, last.divergence, last.smoothness,
               r.final_texture.string());
  }
};

// ---------------------------------------------------------------- eval

struct EvalCmd {
  ConfigFlags flags;
  std::string texture, baseline, manifest, train_manifest, prompts, judge, mode, out, threads, max_samples;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("eval", "Score a texture on a held-out set");
    flags.add(c);
    auto* tex = c->add_option("-t,--texture", texture, "Texture PNG to evaluate");
    auto* base = c->add_option("--baseline", baseline, "Evaluate a reference texture instead: random or clean")
                     ->check(CLI::IsMember({"random", "clean"}));
    tex->excludes(base);
    c->add_option("-m,--manifest", manifest, "Held-out manifest (paths.eval_manifest)");
    c->add_option("--train-manifest", train_manifest, "Training manifest; the two sets must not overlap");
    c->add_option("--prompts", prompts, "Prompt set JSON (paths.prompts)");
    c->add_option("--judge", judge, "mock, http or none (eval.judge)");
    c->add_option("--mode", mode, "closed_set or open_text (eval.success_mode)");
    c->add_option("--threads", threads, "Worker threads (eval.threads)");
    c->add_option("--max-samples", max_samples, "Evaluate only the first N entries (eval.max_samples)");
    c->add_option("-o,--out", out, "Report directory (default <paths.output_dir>/<run id>-eval)");
    c->callback([this] { exec(); });
  }

  void exec() const {
    if (texture.empty() && baseline.empty()) throw ConfigError("eval needs --texture or --baseline");
    CliConfig cfg = flags.load();
    set_path_if(cfg, "paths.eval_manifest", manifest);
    set_path_if(cfg, "paths.prompts", prompts);
    set_if(cfg, "eval.judge", judge);
    set_if(cfg, "eval.success_mode", mode);
    set_if(cfg, "eval.threads", threads);
    set_if(cfg, "eval.max_samples", max_samples);
    cfg.run_id = make_run_id(cfg.run.seed);
    TextureMap tex;
    if (!texture.empty()) tex = import_texture(texture);
    else if (baseline == "random") tex = random_texture(cfg.run.texture_size, cfg.run.seed);
    else tex = clean_texture_for(cfg);
    const fs::path dir = out.empty() ? cfg.output_dir / (cfg.run_id + "-eval") : fs::path(out);
    const auto rep = evaluate_from_config(cfg, tex, dir, train_manifest);
    fmt::print("{} records over {} samples{}\n", rep.records.size(), rep.feature_cosines.size(),
               rep.incomplete ? " (INCOMPLETE)" : "");
    for (const auto& [s, r] : rep.scenario_rate) fmt::print("  {:<11} {:6.1f}%\n", scenario_name(s), 100 * r);
    fmt::print("  {:<11} {:6.1f}%\n  universality {:.1f}%\n", "average", 100 * rep.overall_rate,
               100 * rep.universality);
    fmt::print("  BLEU {:.4f}  METEOR {:.4f}  ROUGE-L {:.4f}\n", rep.mean_bleu, rep.mean_meteor, rep.mean_rouge);
    if (rep.mean_judge)
      fmt::print("  judge general {:.2f} regional {:.2f} suggestion {:.2f}\n", rep.mean_judge->general,
                 rep.mean_judge->regional, rep.mean_judge->suggestion);
    for (const auto& [l, v] : rep.mean_layer_cosine) fmt::print("  {} cosine {:.4f}\n", l, v);
    fmt::print("{}\n", (dir / "summary.json").string());
  }
};

// ---------------------------------------------------------------- sweep

struct SweepCmd {
  ConfigFlags flags;
  std::vector<std::string> grid;
  bool ladder = false;
  std::string manifest, eval_manifest, out;
  int jobs = 1;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("sweep", "Run an ablation grid and tabulate the results");
    flags.add(c);
    c->add_option("-g,--grid", grid,
                  "Axis name=v1,v2,... with name alpha (e.g. 0.4:0.6), delta, lambda, pitch_ratio (e.g. 3:1:1) "
                  "or any dotted config key (repeatable)");
    c->add_flag("--ladder", ladder, "Run the five-rung ablation ladder instead of a grid");
    c->add_option("-m,--manifest", manifest, "Training manifest (paths.manifest)");
    c->add_option("-e,--eval-manifest", eval_manifest, "Held-out manifest (paths.eval_manifest)");
    c->add_option("-o,--out", out, "Sweep directory (default <paths.output_dir>/<run id>-sweep)");
    c->add_option("-j,--jobs", jobs, "Cells run concurrently")->capture_default_str();
    c->callback([this] { exec(); });
  }

  void exec() const {
    if (grid.empty() && !ladder) throw ConfigError("sweep grid is empty: pass --grid name=values or --ladder");
    if (!grid.empty() && ladder) throw ConfigError("--grid and --ladder are exclusive");
    if (jobs < 1) throw ConfigError("--jobs must be >= 1");
    CliConfig cfg = flags.load();
    set_path_if(cfg, "paths.manifest", manifest);
    set_path_if(cfg, "paths.eval_manifest", eval_manifest);
    if (cfg.manifest.empty()) throw ConfigError("paths.manifest is not set (use --manifest or the config file)");
    const auto pitches = load_manifest(cfg.manifest).pose_grid.pitches_deg;
    std::vector<SweepCell> cells;
    if (ladder) {
      cells = ladder_cells(pitches);
    } else {
      std::vector<SweepAxis> axes;
      for (const auto& g : grid) axes.push_back(parse_sweep_axis(g));
      cells = grid_cells(axes, pitches);
    }
    cfg.run_id = make_run_id(cfg.run.seed);
    const fs::path dir = out.empty() ? cfg.output_dir / (cfg.run_id + "-sweep") : fs::path(out);
    const auto results = run_sweep(cfg, cells, dir, jobs);
    write_provenance(cfg, dir, "sweep", {dir / "comparison.csv", dir / "comparison.md"},
                     {{"cells", results.size()}});
    fmt::print("{}", comparison_markdown(results));
    fmt::print("{}\n", (dir / "comparison.md").string());
  }
};

// ---------------------------------------------------------------- plot

struct PlotCmd {
  std::vector<std::string> reports, labels;
  std::string loss, out;

  void add(CLI::App& root) {
    auto* c = root.add_subcommand("plot", "Draw SVG charts from evaluation reports and loss logs");
    c->add_option("-r,--report", reports, "Report directory or summary.json (repeatable)");
    c->add_option("-l,--label", labels, "Series label per report (repeatable)");
    c->add_option("--loss", loss, "loss_log.jsonl or a run directory");
    c->add_option("-o,--out", out, "Output directory")->required();
    c->callback([this] { exec(); });
  }

  void exec() const {
    if (reports.empty() && loss.empty()) throw ConfigError("plot needs --report or --loss");
    std::vector<fs::path> written;
    if (!reports.empty()) {
      std::vector<fs::path> summaries;
      for (const auto& r : reports) summaries.push_back(fs::is_directory(r) ? fs::path(r) / "summary.json" : fs::path(r));
      for (auto& p : eval::plot_reports(summaries, labels, out)) written.push_back(p);
    }
    if (!loss.empty()) {
      const fs::path log = fs::is_directory(loss) ? fs::path(loss) / "loss_log.jsonl" : fs::path(loss);
      written.push_back(eval::plot_loss(log, out));
    }
    for (const auto& p : written) fmt::print("{}\n", p.string());
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal camouflage attack toolkit: dataset, attack, eval, sweep, plot"};
  app.set_version_flag("--version", std::string(code_version()));
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();
  app.parse_complete_callback([&] { spdlog::set_level(spdlog::level::from_str(log_level)); });

  DatasetCmd dataset;
  AttackCmd attack;
  EvalCmd evaluation;
  SweepCmd sweep;
  PlotCmd plot;
  dataset.add(app);
  attack.add(app);
  evaluation.add(app);
  sweep.add(app);
  plot.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitFailure;
  }
  return EXIT_SUCCESS;
}
