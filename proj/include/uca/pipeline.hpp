#pragma once

// Config-driven entry points shared by the CLI, sweeps and the acceptance
// suite: build the victim, run an attack, evaluate a texture.

#include <filesystem>
#include <memory>

#include "uca/attack.hpp"
#include "uca/config.hpp"
#include "uca/eval/evaluate.hpp"

namespace uca {

std::unique_ptr<Victim> make_victim(const CliConfig& config);

/// The prompt set named by config.prompts, or the built-in one.
eval::PromptSet prompts_for(const CliConfig& config);

/// The paint the attacked vehicle carries in clean renders.
TextureMap clean_texture_for(const CliConfig& config);

/// Texture drawn exactly like a random_uniform attack initialisation.
TextureMap random_texture(int size, std::uint64_t seed);

/// Loads config.manifest (ConfigError naming paths.manifest when unset),
/// runs the attack into run_dir and writes provenance.json there.
RunResult attack_from_config(const CliConfig& config, const std::filesystem::path& run_dir, bool resume = false);

/// Evaluates `adversarial` on config.eval_manifest against the clean paint.
/// When `train_manifest` is given the two sets must not share rasters.
/// Writes the report (and provenance) to out_dir unless it is empty.
eval::EvalReport evaluate_from_config(const CliConfig& config, const TextureMap& adversarial,
                                      const std::filesystem::path& out_dir,
                                      const std::filesystem::path& train_manifest = {});

}  // namespace uca
