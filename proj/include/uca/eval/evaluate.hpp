#pragma once

// Held-out evaluation of a texture: clean vs adversarial answers for every
// (sample, prompt), NLP metrics, judge scores, 3-P success and universality.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uca/eval/judge.hpp"
#include "uca/texture.hpp"
#include "uca/victim.hpp"
#include "uca/view_sampler.hpp"

namespace uca::eval {

struct PromptSet {
  std::string version;
  std::map<Scenario, std::vector<std::string>> prompts;

  /// ConfigError on blank prompts or an empty set. Scenarios may be absent;
  /// their rates are then omitted from the aggregates.
  void validate() const;
  std::size_t size() const noexcept;
};

/// {"version": "...", "scenarios": {"planning": [...], ...}}
PromptSet load_prompt_set(const std::filesystem::path& path);
PromptSet prompt_set_from_json(const nlohmann::json& j);
nlohmann::json prompt_set_to_json(const PromptSet& set);
/// The prompt set shipped in assets/prompts.json, compiled in.
PromptSet default_prompt_set();

struct EvalRecord {
  std::string sample_id;
  Scenario scenario = Scenario::Planning;
  std::string prompt;
  std::string clean_text;
  std::string adv_text;
  double bleu = 0.0;
  double meteor = 0.0;
  double rouge = 0.0;
  std::optional<JudgeScores> judge;
  std::string judge_error;  // empty unless the judge failed for this record
  bool success = false;
  double distance_m = 0.0;
  double pitch_deg = 0.0;
};

struct SampleFeatureCosine {
  std::string sample_id;
  std::map<std::string, double> layer_cosine;  // mean row cosine per layer
};

struct EvalOptions {
  SuccessMode mode = SuccessMode::ClosedSet;
  JudgeClient* judge = nullptr;  // optional; never blocks metrics
  int threads = 1;
  std::size_t max_samples = 0;  // 0: all entries
};

struct EvalReport {
  std::vector<EvalRecord> records;
  std::vector<SampleFeatureCosine> feature_cosines;
  std::map<Scenario, double> scenario_rate;
  double overall_rate = 0.0;  // mean of the scenario rates
  std::map<double, double> distance_rate;
  std::map<double, double> pitch_rate;
  double universality = 0.0;  // fraction of samples attacked successfully on every prompt
  double mean_bleu = 0.0, mean_meteor = 0.0, mean_rouge = 0.0;
  std::optional<JudgeScores> mean_judge;
  std::size_t judge_failures = 0;
  std::map<std::string, double> mean_layer_cosine;
  bool incomplete = false;
  std::vector<std::string> failed_samples;
  std::string victim;
  std::string prompt_version;
  std::string success_mode;
};

/// For every entry: render `clean` and `adversarial` at full frame, answer
/// every prompt on both, score the pair. Aggregates are recomputed from the
/// records. Samples whose rasters fail to load are listed and the report is
/// flagged incomplete.
EvalReport evaluate_run(const TextureMap& adversarial, const TextureMap& clean, const DatasetManifest& manifest,
                        const Victim& victim, const PromptSet& prompts, const EvalOptions& options = {});

/// Recomputes every aggregate field from records and feature_cosines.
void aggregate(EvalReport& report);

/// Throws PreconditionError when the two manifests share a raster file.
void require_disjoint(const DatasetManifest& train, const DatasetManifest& held_out);

nlohmann::json record_json(const EvalRecord& r);
nlohmann::json summary_json(const EvalReport& report);

/// out_dir/records.jsonl and out_dir/summary.json.
void write_report(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace uca::eval
