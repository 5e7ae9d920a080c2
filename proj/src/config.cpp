#include "uca/config.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "uca/digest.hpp"
#include "uca/error.hpp"
#include "uca/random.hpp"

#ifndef UCA_GIT_VERSION
#define UCA_GIT_VERSION "unknown"
#endif

namespace uca {

namespace {

using json = nlohmann::json;

void allow_only(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.count(k)) throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <typename T>
void take(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

std::string num_key(double v) { return json(v).dump(); }

}  // namespace

void CliConfig::validate() const {
  run.validate();
  if (victim.empty()) throw ConfigError("victim name is empty");
  if (judge != "mock" && judge != "http" && judge != "none")
    throw ConfigError("eval.judge must be mock, http or none");
  if (eval_threads < 1) throw ConfigError("eval.threads must be >= 1");
}

json config_to_json(const CliConfig& c) {
  const RunConfig& r = c.run;
  json weights = json::object();
  for (const auto& [k, v] : r.attack.layer_weights) weights[k] = v;
  json pitch = json::object();
  for (const auto& [p, w] : r.sampling.pitch_weights) pitch[num_key(p)] = w;
  json schedule = json::array();
  for (const auto& e : r.schedule)
    schedule.push_back({{"crop_fraction", e.crop_fraction},
                        {"weight", e.weight},
                        {"output_height", e.output_height},
                        {"output_width", e.output_width},
                        {"label", e.label}});
  return {
      {"version", kConfigVersion},
      {"seed", r.seed},
      {"paths",
       {{"manifest", c.manifest.string()},
        {"eval_manifest", c.eval_manifest.string()},
        {"output_dir", c.output_dir.string()},
        {"prompts", c.prompts.string()}}},
      {"victim", {{"name", c.victim}, {"options", c.victim_options}}},
      {"attack",
       {{"delta", r.attack.delta},
        {"layer_weights", weights},
        {"lambda_smooth", r.attack.lambda_smooth},
        {"reselect_every", r.attack.reselect_every},
        {"smooth_target", std::string(smoothness_target_name(r.attack.smooth_target))}}},
      {"sampling", {{"pitch_weights", pitch}, {"batch_size", r.sampling.batch_size}, {"seed", r.sampling.seed}}},
      {"schedule", schedule},
      {"optimizer",
       {{"kind", std::string(optimizer_name(r.optimizer))},
        {"learning_rate", r.learning_rate},
        {"epochs", r.max_epochs},
        {"max_steps", r.max_steps},
        {"momentum", r.momentum},
        {"beta1", r.adam_beta1},
        {"beta2", r.adam_beta2},
        {"eps", r.adam_eps}}},
      {"texture", {{"size", r.texture_size}, {"init", std::string(init_mode_name(r.init))}, {"init_file", r.init_file.string()}}},
      {"run", {{"checkpoint_every", r.checkpoint_every}, {"threads", r.threads}, {"cache_clean_features", r.cache_clean_features}}},
      {"eval",
       {{"judge", c.judge},
        {"success_mode", std::string(eval::success_mode_name(c.success_mode))},
        {"threads", c.eval_threads},
        {"max_samples", c.eval_max_samples}}},
  };
}

CliConfig config_from_json(const json& j, const std::filesystem::path& base) {
  CliConfig c;
  RunConfig& r = c.run;
  allow_only(j, "", {"version", "seed", "paths", "victim", "attack", "sampling", "schedule", "optimizer", "texture",
                     "run", "eval"});
  int version = kConfigVersion;
  take(j, "version", version, "");
  if (version != kConfigVersion)
    throw ConfigError(fmt::format("config version {} is not supported (expected {})", version, kConfigVersion));
  take(j, "seed", r.seed, "");

  if (j.contains("paths")) {
    const auto& p = j["paths"];
    allow_only(p, "paths", {"manifest", "eval_manifest", "output_dir", "prompts"});
    std::string s;
    auto path_of = [&](const char* key, std::filesystem::path& out) {
      if (!p.contains(key)) return;
      s.clear();
      take(p, key, s, "paths");
      out = resolve(s, base);
    };
    path_of("manifest", c.manifest);
    path_of("eval_manifest", c.eval_manifest);
    path_of("output_dir", c.output_dir);
    path_of("prompts", c.prompts);
  }
  if (j.contains("victim")) {
    const auto& v = j["victim"];
    allow_only(v, "victim", {"name", "options"});
    take(v, "name", c.victim, "victim");
    if (v.contains("options")) c.victim_options = v["options"];
  }
  if (j.contains("attack")) {
    const auto& a = j["attack"];
    allow_only(a, "attack", {"delta", "layer_weights", "lambda_smooth", "reselect_every", "smooth_target"});
    take(a, "delta", r.attack.delta, "attack");
    take(a, "layer_weights", r.attack.layer_weights, "attack");
    take(a, "lambda_smooth", r.attack.lambda_smooth, "attack");
    take(a, "reselect_every", r.attack.reselect_every, "attack");
    std::string t;
    take(a, "smooth_target", t, "attack");
    if (!t.empty()) r.attack.smooth_target = parse_smoothness_target(t);
  }
  if (j.contains("sampling")) {
    const auto& s = j["sampling"];
    allow_only(s, "sampling", {"pitch_weights", "batch_size", "seed"});
    if (s.contains("pitch_weights")) {
      std::map<std::string, double> raw;
      take(s, "pitch_weights", raw, "sampling");
      r.sampling.pitch_weights.clear();
      for (const auto& [k, w] : raw) {
        try {
          r.sampling.pitch_weights[std::stod(k)] = w;
        } catch (const std::exception&) {
          throw ConfigError("sampling.pitch_weights key '" + k + "' is not a number");
        }
      }
    }
    take(s, "batch_size", r.sampling.batch_size, "sampling");
    take(s, "seed", r.sampling.seed, "sampling");
  }
  if (j.contains("schedule")) {
    const auto& sc = j["schedule"];
    if (!sc.is_array()) throw ConfigError("schedule must be an array");
    r.schedule.clear();
    for (const auto& e : sc) {
      allow_only(e, "schedule[]", {"crop_fraction", "weight", "output_height", "output_width", "output_size", "label"});
      ScheduleEntry entry;
      take(e, "crop_fraction", entry.crop_fraction, "schedule[]");
      take(e, "weight", entry.weight, "schedule[]");
      int size = 0;
      take(e, "output_size", size, "schedule[]");
      if (size > 0) entry.output_height = entry.output_width = size;
      take(e, "output_height", entry.output_height, "schedule[]");
      take(e, "output_width", entry.output_width, "schedule[]");
      take(e, "label", entry.label, "schedule[]");
      r.schedule.push_back(entry);
    }
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    allow_only(o, "optimizer", {"kind", "learning_rate", "epochs", "max_steps", "momentum", "beta1", "beta2", "eps"});
    std::string kind;
    take(o, "kind", kind, "optimizer");
    if (!kind.empty()) r.optimizer = parse_optimizer(kind);
    take(o, "learning_rate", r.learning_rate, "optimizer");
    take(o, "epochs", r.max_epochs, "optimizer");
    take(o, "max_steps", r.max_steps, "optimizer");
    take(o, "momentum", r.momentum, "optimizer");
    take(o, "beta1", r.adam_beta1, "optimizer");
    take(o, "beta2", r.adam_beta2, "optimizer");
    take(o, "eps", r.adam_eps, "optimizer");
  }
  if (j.contains("texture")) {
    const auto& t = j["texture"];
    allow_only(t, "texture", {"size", "init", "init_file"});
    take(t, "size", r.texture_size, "texture");
    std::string init, file;
    take(t, "init", init, "texture");
    if (!init.empty()) r.init = parse_init_mode(init);
    take(t, "init_file", file, "texture");
    r.init_file = resolve(file, base);
  }
  if (j.contains("run")) {
    const auto& rr = j["run"];
    allow_only(rr, "run", {"checkpoint_every", "threads", "cache_clean_features"});
    take(rr, "checkpoint_every", r.checkpoint_every, "run");
    take(rr, "threads", r.threads, "run");
    take(rr, "cache_clean_features", r.cache_clean_features, "run");
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    allow_only(e, "eval", {"judge", "success_mode", "threads", "max_samples"});
    take(e, "judge", c.judge, "eval");
    std::string mode;
    take(e, "success_mode", mode, "eval");
    if (!mode.empty()) c.success_mode = eval::parse_success_mode(mode);
    take(e, "threads", c.eval_threads, "eval");
    take(e, "max_samples", c.eval_max_samples, "eval");
  }
  return c;
}

CliConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingFile("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  CliConfig c = config_from_json(j, std::filesystem::absolute(path).parent_path());
  c.validate();
  return c;
}

void apply_override(CliConfig& config, std::string_view key, std::string_view value) {
  if (key.empty()) throw ConfigError("override key is empty");
  json j = config_to_json(config);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = std::string(value);
  }
  std::string pointer;
  std::size_t start = 0;
  // Map keys may contain dots (pitch angles), so they are taken whole.
  for (const std::string_view prefix : {"attack.layer_weights.", "sampling.pitch_weights.", "victim.options."}) {
    if (!key.starts_with(prefix)) continue;
    std::string leaf(key.substr(prefix.size()));
    if (leaf.empty()) throw ConfigError("malformed override key '" + std::string(key) + "'");
    if (prefix == "sampling.pitch_weights.") {
      try {
        leaf = num_key(std::stod(leaf));
      } catch (const std::exception&) {
        throw ConfigError("pitch weight key '" + leaf + "' is not a number");
      }
    }
    std::string head(prefix.substr(0, prefix.size() - 1));
    for (char& ch : head)
      if (ch == '.') ch = '/';
    pointer = "/" + head + "/" + leaf;
    start = key.size();
    break;
  }
  while (start < key.size() || pointer.empty()) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed override key '" + std::string(key) + "'");
    pointer += "/" + std::string(part);
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  const json::json_pointer ptr(pointer);
  // Only existing leaves may be set, except inside free-form maps.
  const bool free_form = key.starts_with("attack.layer_weights.") || key.starts_with("sampling.pitch_weights.") ||
                         key.starts_with("victim.options.");
  if (!free_form && !j.contains(ptr)) throw ConfigError("unknown config key '" + std::string(key) + "'");
  if (j.contains(ptr) && j[ptr].is_string() && !parsed.is_string()) parsed = std::string(value);
  j[ptr] = parsed;
  CliConfig updated = config_from_json(j);
  updated.run_id = config.run_id;
  updated.overrides = config.overrides;
  updated.overrides.push_back(std::string(key) + "=" + std::string(value));
  config = std::move(updated);
}

void apply_override(CliConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override must look like key=value: " + std::string(assignment));
  apply_override(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

std::string make_run_id(std::uint64_t seed) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  const auto ticks = static_cast<std::uint64_t>(now.time_since_epoch().count());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  return fmt::format("{}-{:08x}", stamp, mix_seed(seed ^ ticks) & 0xffffffffULL);
}

std::string_view code_version() noexcept { return UCA_GIT_VERSION; }

void write_provenance(const CliConfig& config, const std::filesystem::path& run_dir, const std::string& command,
                      const std::vector<std::filesystem::path>& outputs, const json& extra) {
  std::filesystem::create_directories(run_dir);
  {
    std::ofstream os(run_dir / "config.json");
    if (!os) throw IoError("cannot write " + (run_dir / "config.json").string());
    os << config_to_json(config).dump(2) << '\n';
  }
  json digests = json::object();
  for (const auto& p : outputs) {
    if (!std::filesystem::exists(p)) continue;
    auto rel = p.lexically_relative(run_dir);
    const std::string name = (rel.empty() || rel.string().starts_with("..")) ? p.string() : rel.string();
    digests[name] = sha256_file(p);
  }
  json prov = {{"run_id", config.run_id},
               {"command", command},
               {"seed", config.run.seed},
               {"code_version", std::string(code_version())},
               {"config_version", kConfigVersion},
               {"overrides", config.overrides},
               {"config_digest", sha256_hex(config_to_json(config).dump())},
               {"outputs", digests}};
  for (const auto& [k, v] : extra.items()) prov[k] = v;
  std::ofstream os(run_dir / "provenance.json");
  if (!os) throw IoError("cannot write " + (run_dir / "provenance.json").string());
  os << prov.dump(2) << '\n';
}

}  // namespace uca
