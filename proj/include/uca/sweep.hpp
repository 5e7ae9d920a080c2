#pragma once

// Ablation sweeps: a grid of config overrides, each cell an attack run plus
// a held-out evaluation, summarised in one comparison table.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "uca/config.hpp"
#include "uca/eval/evaluate.hpp"

namespace uca {

struct SweepCell {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;  // dotted key, value
};

/// One axis of a grid: "alpha", "delta", "lambda" or "pitch_ratio" (or any
/// dotted config key) with its values, e.g. alpha = {"0.4:0.6", "0.5:0.5"}.
struct SweepAxis {
  std::string name;
  std::vector<std::string> values;
};

/// Parses "name=v1,v2,..."; ConfigError when malformed or empty.
SweepAxis parse_sweep_axis(std::string_view text);

/// Cartesian product of the axes. ConfigError when there are no axes or an
/// axis has no values. `pitches` orders the pitch_ratio components.
std::vector<SweepCell> grid_cells(const std::vector<SweepAxis>& axes, const std::vector<double>& pitches);

/// The five-rung ablation ladder: encoder-only FDL, projector-only FDL,
/// multi-layer FDL, + pitch-weighted sampling, + multi-scale.
std::vector<SweepCell> ladder_cells(const std::vector<double>& pitches);

struct SweepResult {
  SweepCell cell;
  std::filesystem::path dir;
  double final_total_loss = 0.0;
  eval::EvalReport report;
};

/// Runs every cell (up to `jobs` concurrently) into out_dir/<cell name>/ and
/// writes out_dir/comparison.csv and comparison.md. Needs base.manifest and
/// base.eval_manifest.
std::vector<SweepResult> run_sweep(const CliConfig& base, const std::vector<SweepCell>& cells,
                                   const std::filesystem::path& out_dir, int jobs = 1);

/// Comparison table (markdown) for finished cells.
std::string comparison_markdown(const std::vector<SweepResult>& results);

}  // namespace uca
