#include "uca/sweep.hpp"

#include <atomic>
#include <cctype>
#include <fstream>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "uca/error.hpp"
#include "uca/pipeline.hpp"

namespace uca {

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string slug(const std::string& s) {
  std::string o;
  for (char c : s) o += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return o;
}

std::string pitch_json(const std::vector<double>& pitches, const std::string& ratio) {
  const auto parts = split(ratio, ':');
  if (parts.size() != pitches.size())
    throw ConfigError(fmt::format("pitch ratio '{}' needs {} components", ratio, pitches.size()));
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    try {
      j[nlohmann::json(pitches[i]).dump()] = std::stod(parts[i]);
    } catch (const std::invalid_argument&) {
      throw ConfigError("pitch ratio component '" + parts[i] + "' is not a number");
    }
  }
  return j.dump();
}

std::vector<std::pair<std::string, std::string>> expand(const std::string& axis, const std::string& value,
                                                        const std::vector<double>& pitches) {
  if (axis == "alpha") {
    const auto parts = split(value, ':');
    if (parts.size() != 2) throw ConfigError("alpha values look like <encoder>:<projector>, got '" + value + "'");
    return {{"attack.layer_weights", nlohmann::json{{"encoder", std::stod(parts[0])}, {"projector", std::stod(parts[1])}}.dump()}};
  }
  if (axis == "delta") return {{"attack.delta", value}};
  if (axis == "lambda") return {{"attack.lambda_smooth", value}};
  if (axis == "pitch_ratio") return {{"sampling.pitch_weights", pitch_json(pitches, value)}};
  return {{axis, value}};
}

}  // namespace

SweepAxis parse_sweep_axis(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("grid axis must look like name=v1,v2: " + std::string(text));
  SweepAxis axis;
  axis.name = std::string(text.substr(0, eq));
  for (auto& v : split(text.substr(eq + 1), ','))
    if (!v.empty()) axis.values.push_back(v);
  if (axis.values.empty()) throw ConfigError("grid axis '" + axis.name + "' has no values");
  return axis;
}

std::vector<SweepCell> grid_cells(const std::vector<SweepAxis>& axes, const std::vector<double>& pitches) {
  if (axes.empty()) throw ConfigError("sweep grid is empty");
  for (const auto& a : axes)
    if (a.values.empty()) throw ConfigError("grid axis '" + a.name + "' has no values");
  std::vector<SweepCell> cells{SweepCell{}};
  for (const auto& a : axes) {
    std::vector<SweepCell> next;
    for (const auto& base : cells)
      for (const auto& v : a.values) {
        SweepCell c = base;
        c.name += (c.name.empty() ? "" : "__") + a.name + "-" + slug(v);
        for (auto& kv : expand(a.name, v, pitches)) c.overrides.push_back(std::move(kv));
        next.push_back(std::move(c));
      }
    cells = std::move(next);
  }
  return cells;
}

std::vector<SweepCell> ladder_cells(const std::vector<double>& pitches) {
  if (pitches.empty()) throw ConfigError("ladder needs at least one pitch");
  // Uniform 1:...:1 versus 3:1:...:1 favouring the lowest pitch.
  std::string ones, favour;
  for (std::size_t i = 0; i < pitches.size(); ++i) {
    ones += i ? ":1" : "1";
    favour += i ? ":1" : "3";
  }
  const std::string uniform = pitch_json(pitches, ones);
  const std::string weighted = pitch_json(pitches, favour);
  nlohmann::json single = nlohmann::json::array();
  single.push_back({{"crop_fraction", 1.0}, {"weight", 1.0}, {"output_size", 224}, {"label", "full"}});
  nlohmann::json multi = nlohmann::json::array();
  for (const auto& e : default_schedule())
    multi.push_back({{"crop_fraction", e.crop_fraction}, {"weight", e.weight}, {"output_size", e.output_height}, {"label", e.label}});
  auto cell = [&](std::string name, double ae, double ap, const std::string& pw, const nlohmann::json& sched) {
    return SweepCell{std::move(name),
                     {{"attack.layer_weights", nlohmann::json{{"encoder", ae}, {"projector", ap}}.dump()},
                      {"sampling.pitch_weights", pw},
                      {"schedule", sched.dump()}}};
  };
  return {cell("1_encoder_only", 1.0, 0.0, uniform, single), cell("2_projector_only", 0.0, 1.0, uniform, single),
          cell("3_multi_layer", 0.4, 0.6, uniform, single), cell("4_plus_sampling", 0.4, 0.6, weighted, single),
          cell("5_plus_multiscale", 0.4, 0.6, weighted, multi)};
}

std::string comparison_markdown(const std::vector<SweepResult>& results) {
  std::string s =
      "| cell | overrides | final loss | planning | prediction | perception | average | universality | projector cos |\n"
      "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : results) {
    std::string ov;
    for (const auto& [k, v] : r.cell.overrides) ov += (ov.empty() ? "" : "; ") + k + "=" + v;
    auto rate = [&](Scenario sc) {
      const auto it = r.report.scenario_rate.find(sc);
      return it == r.report.scenario_rate.end() ? std::string("-") : fmt::format("{:.1f}%", 100 * it->second);
    };
    const auto pc = r.report.mean_layer_cosine.find("projector");
    s += fmt::format("| {} | `{}` | {:.5f} | {} | {} | {} | {:.1f}% | {:.1f}% | {} |\n", r.cell.name, ov,
                     r.final_total_loss, rate(Scenario::Planning), rate(Scenario::Prediction),
                     rate(Scenario::Perception), 100 * r.report.overall_rate, 100 * r.report.universality,
                     pc == r.report.mean_layer_cosine.end() ? std::string("-") : fmt::format("{:.4f}", pc->second));
  }
  return s;
}

std::vector<SweepResult> run_sweep(const CliConfig& base, const std::vector<SweepCell>& cells,
                                   const std::filesystem::path& out_dir, int jobs) {
  if (cells.empty()) throw ConfigError("sweep grid is empty");
  if (base.manifest.empty()) throw ConfigError("paths.manifest is not set");
  if (base.eval_manifest.empty()) throw ConfigError("paths.eval_manifest is not set");
  std::filesystem::create_directories(out_dir);

  // Validate every cell before spending time on any of them.
  std::vector<CliConfig> configs;
  for (const auto& c : cells) {
    CliConfig cfg = base;
    for (const auto& [k, v] : c.overrides) apply_override(cfg, k, v);
    cfg.run_id = base.run_id.empty() ? c.name : base.run_id + "/" + c.name;
    cfg.validate();
    configs.push_back(std::move(cfg));
  }

  std::vector<SweepResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const auto dir = out_dir / cells[i].name;
        spdlog::info("sweep cell {}/{}: {}", i + 1, cells.size(), cells[i].name);
        RunResult rr = attack_from_config(configs[i], dir);
        results[i].cell = cells[i];
        results[i].dir = dir;
        results[i].final_total_loss = rr.state.loss_history.empty() ? 0.0 : rr.state.loss_history.back().total;
        results[i].report = evaluate_from_config(configs[i], rr.state.texture, dir / "eval", configs[i].manifest);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const std::string md = comparison_markdown(results);
  std::ofstream(out_dir / "comparison.md") << md;
  std::ofstream csv(out_dir / "comparison.csv");
  csv << "cell,final_loss,planning,prediction,perception,average,universality,projector_cosine\n";
  for (const auto& r : results) {
    auto rate = [&](Scenario sc) {
      const auto it = r.report.scenario_rate.find(sc);
      return it == r.report.scenario_rate.end() ? 0.0 : it->second;
    };
    const auto pc = r.report.mean_layer_cosine.find("projector");
    csv << fmt::format("{},{:.8g},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.cell.name, r.final_total_loss,
                       rate(Scenario::Planning), rate(Scenario::Prediction), rate(Scenario::Perception),
                       r.report.overall_rate, r.report.universality,
                       pc == r.report.mean_layer_cosine.end() ? 0.0 : pc->second);
  }
  return results;
}

}  // namespace uca
