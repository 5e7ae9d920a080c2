#include "uca/pipeline.hpp"

#include <spdlog/spdlog.h>

#include "uca/error.hpp"
#include "uca/scene_factory.hpp"

namespace uca {

std::unique_ptr<Victim> make_victim(const CliConfig& config) {
  return VictimRegistry::instance().create(config.victim, config.victim_options);
}

eval::PromptSet prompts_for(const CliConfig& config) {
  return config.prompts.empty() ? eval::default_prompt_set() : eval::load_prompt_set(config.prompts);
}

TextureMap clean_texture_for(const CliConfig& config) {
  return benign_texture(config.run.texture_size, config.run.texture_size);
}

TextureMap random_texture(int size, std::uint64_t seed) {
  Rng rng(mix_seed(seed));
  return init_texture(size, InitMode::RandomUniform, rng);
}

RunResult attack_from_config(const CliConfig& config, const std::filesystem::path& run_dir, bool resume) {
  config.validate();
  if (config.manifest.empty()) throw ConfigError("paths.manifest is not set (use --manifest or the config file)");
  const DatasetManifest manifest = load_manifest(config.manifest);
  const auto victim = make_victim(config);
  spdlog::info("attack: {} samples, victim {}, {} epochs, lr {}, optimizer {}", manifest.size(), config.victim,
               config.run.max_epochs, config.run.learning_rate, optimizer_name(config.run.optimizer));
  RunResult result = run(config.run, manifest, *victim, run_dir, resume);
  write_provenance(config, run_dir, "attack",
                   {run_dir / "texture_final.png", run_dir / "state_final.bin", run_dir / "loss_log.jsonl"},
                   {{"iterations", result.state.iteration}, {"steps_per_epoch", result.steps_per_epoch}});
  return result;
}

eval::EvalReport evaluate_from_config(const CliConfig& config, const TextureMap& adversarial,
                                      const std::filesystem::path& out_dir,
                                      const std::filesystem::path& train_manifest) {
  config.validate();
  if (config.eval_manifest.empty())
    throw ConfigError("paths.eval_manifest is not set (use --manifest or the config file)");
  const DatasetManifest manifest = load_manifest(config.eval_manifest);
  if (!train_manifest.empty()) eval::require_disjoint(load_manifest(train_manifest), manifest);
  const auto victim = make_victim(config);
  const auto prompts = prompts_for(config);
  std::unique_ptr<eval::JudgeClient> judge;
  try {
    judge = eval::make_judge(config.judge);
  } catch (const JudgeUnavailable& e) {
    spdlog::error("judge unavailable, continuing with metrics only: {}", e.what());
  }
  eval::EvalOptions options;
  options.mode = config.success_mode;
  options.judge = judge.get();
  options.threads = config.eval_threads;
  options.max_samples = config.eval_max_samples;
  eval::EvalReport report =
      eval::evaluate_run(adversarial, clean_texture_for(config), manifest, *victim, prompts, options);
  if (!out_dir.empty()) {
    eval::write_report(report, out_dir);
    write_provenance(config, out_dir, "eval", {out_dir / "records.jsonl", out_dir / "summary.json"});
  }
  return report;
}

}  // namespace uca
