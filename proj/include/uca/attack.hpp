#pragma once

// Texture optimisation loop: sample views, render clean and adversarial
// paint under a shared transform, and descend the feature objective.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uca/divergence.hpp"
#include "uca/texture.hpp"
#include "uca/transforms.hpp"
#include "uca/victim.hpp"
#include "uca/view_sampler.hpp"

namespace uca {

enum class OptimizerKind { GradientDescent, Momentum, Adam };
enum class InitMode { RandomUniform, Gray, FromFile };

std::string_view optimizer_name(OptimizerKind k) noexcept;
OptimizerKind parse_optimizer(std::string_view name);
std::string_view init_mode_name(InitMode m) noexcept;
InitMode parse_init_mode(std::string_view name);

struct RunConfig {
  AttackConfig attack;
  SamplingPolicy sampling;
  TransformSchedule schedule = default_schedule();
  double learning_rate = 0.1;
  int max_epochs = 5;
  int checkpoint_every = 0;  // iterations; 0 keeps only the final state
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  InitMode init = InitMode::RandomUniform;
  std::filesystem::path init_file;
  int texture_size = 512;
  long max_steps = 0;  // 0: epochs decide
  int threads = 1;
  bool cache_clean_features = true;

  /// ConfigError on lr <= 0, max_epochs < 1 and invalid sub-configs.
  void validate() const;
};

struct LossRecord {
  long iteration = 0;
  double divergence = 0.0;
  double smoothness = 0.0;
  double total = 0.0;
  std::map<std::string, double> key_sizes;  // mean |Z_l| over the batch
};

struct RunState {
  TextureMap texture;
  long iteration = 0;
  std::vector<LossRecord> loss_history;
  Image moment1;  // optimizer buffers, empty until first used
  Image moment2;
  std::string rng_state;  // textual engine state, restored on resume
};

/// random_uniform draws every texel channel from uniform01 in row-major
/// order; gray fills 0.5; from_file imports a PNG (FormatError on failure).
TextureMap init_texture(int resolution, InitMode mode, Rng& rng, const std::filesystem::path& file = {});

/// Per (entry, crop) clean feature memo; the benign texture never changes.
class CleanFeatureCache {
 public:
  const FeatureStack* find(std::size_t entry, double crop) const;
  void put(std::size_t entry, double crop, FeatureStack fs);
  std::size_t size() const noexcept { return map_.size(); }

 private:
  std::map<std::pair<std::size_t, std::uint64_t>, FeatureStack> map_;
};

/// Key-feature snapshots per (entry, crop) for reselect_every > 1.
struct KeyCache {
  std::map<std::pair<std::size_t, std::uint64_t>, KeyFeatureSet> sets;
};

struct StepContext {
  const DatasetManifest* manifest = nullptr;
  SampleCache* samples = nullptr;
  const Victim* victim = nullptr;
  const TextureMap* benign = nullptr;
  CleanFeatureCache* clean_cache = nullptr;  // optional
  KeyCache* key_cache = nullptr;             // required when reselect_every > 1
};

struct BatchGradient {
  Image texture_grad;
  ObjectiveTerms terms;  // batch means
  std::map<std::string, double> key_sizes;
};

/// Batch-mean objective and its texture gradient at the current texture.
/// Keys are re-selected from the current features unless a snapshot younger
/// than reselect_every iterations exists in ctx.key_cache.
BatchGradient batch_objective(const RunState& state, const std::vector<BatchItem>& batch, const StepContext& ctx,
                              const RunConfig& config);

/// One update: objective, gradient, optimizer step, clamp, log append.
/// Throws NonFiniteLoss (after writing `dump_dir` when set).
void step(RunState& state, const std::vector<BatchItem>& batch, const StepContext& ctx, const RunConfig& config,
          const std::filesystem::path& dump_dir = {});

/// Checkpoint state file (versioned binary). load throws VersionError on a
/// version mismatch and FormatError on corrupt files.
inline constexpr std::uint32_t kStateVersion = 1;
void save_state(const RunState& state, const std::filesystem::path& path);
RunState load_state(const std::filesystem::path& path);

struct RunResult {
  RunState state;
  std::filesystem::path final_texture;  // PNG
  long steps_per_epoch = 0;
};

using StepCallback = std::function<void(const RunState&)>;

/// max_epochs x ceil(|manifest| / batch_size) iterations (or max_steps).
/// Writes out_dir/{loss_log.jsonl, checkpoints/, texture_final.png,
/// state_final.bin}. With resume, continues from the newest checkpoint.
RunResult run(const RunConfig& config, const DatasetManifest& manifest, const Victim& victim,
              const std::filesystem::path& out_dir, bool resume = false, const StepCallback& on_step = {});

std::string loss_record_json(const LossRecord& r);

}  // namespace uca
