#pragma once

// Run configuration file (schema in docs/config.md), dotted-key overrides
// and the provenance record written into every run directory.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uca/attack.hpp"
#include "uca/eval/judge.hpp"

namespace uca {

inline constexpr int kConfigVersion = 1;

struct CliConfig {
  RunConfig run;
  std::filesystem::path manifest;       // training set
  std::filesystem::path eval_manifest;  // held-out set
  std::filesystem::path output_dir = "runs";
  std::filesystem::path prompts;        // empty: built-in prompt set
  std::string victim = "surrogate";
  nlohmann::json victim_options = nlohmann::json::object();
  std::string judge = "mock";  // mock | http | none
  eval::SuccessMode success_mode = eval::SuccessMode::ClosedSet;
  int eval_threads = 1;
  std::size_t eval_max_samples = 0;
  std::string run_id;
  std::vector<std::string> overrides;  // "key=value" as applied, in order

  /// ConfigError on any invalid field.
  void validate() const;
};

nlohmann::json config_to_json(const CliConfig& config);
/// Missing keys keep their defaults; unknown keys and a wrong version are
/// ConfigErrors. Relative paths resolve against `base_dir` when given.
CliConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
/// MissingFile, FormatError (bad JSON) or ConfigError.
CliConfig load_config(const std::filesystem::path& path);

/// Sets a dotted key (e.g. "optimizer.learning_rate") from text. The value
/// is read as JSON when it parses, as a plain string otherwise. The
/// override is appended to config.overrides.
void apply_override(CliConfig& config, std::string_view key, std::string_view value);
/// "key=value" form of apply_override.
void apply_override(CliConfig& config, std::string_view assignment);

/// UTC timestamp plus eight hex digits from the seed and the clock.
std::string make_run_id(std::uint64_t seed);

/// Build identifier baked in at configure time ("unknown" outside git).
std::string_view code_version() noexcept;

/// Writes run_dir/config.json (snapshot) and run_dir/provenance.json with
/// run id, seed, code version, command, overrides and SHA-256 digests of
/// `outputs` (paths relative to run_dir when inside it).
void write_provenance(const CliConfig& config, const std::filesystem::path& run_dir, const std::string& command,
                      const std::vector<std::filesystem::path>& outputs,
                      const nlohmann::json& extra = nlohmann::json::object());

}  // namespace uca
