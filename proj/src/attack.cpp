#include "uca/attack.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "uca/error.hpp"
#include "uca/scene_factory.hpp"

namespace uca {

std::string_view optimizer_name(OptimizerKind k) noexcept {
  switch (k) {
    case OptimizerKind::GradientDescent: return "gd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
  }
  return "gd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "gd" || name == "sgd") return OptimizerKind::GradientDescent;
  if (name == "momentum") return OptimizerKind::Momentum;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("optimizer must be gd, momentum or adam, got '" + std::string(name) + "'");
}

std::string_view init_mode_name(InitMode m) noexcept {
  switch (m) {
    case InitMode::RandomUniform: return "random_uniform";
    case InitMode::Gray: return "gray";
    case InitMode::FromFile: return "from_file";
  }
  return "random_uniform";
}

InitMode parse_init_mode(std::string_view name) {
  if (name == "random_uniform") return InitMode::RandomUniform;
  if (name == "gray") return InitMode::Gray;
  if (name == "from_file") return InitMode::FromFile;
  throw ConfigError("init must be random_uniform, gray or from_file, got '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  attack.validate();
  sampling.validate();
  if (schedule.empty()) throw EmptySchedule("transform schedule has no entries");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (texture_size < 2) throw ConfigError("texture_size must be >= 2");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (init == InitMode::FromFile && init_file.empty()) throw ConfigError("init from_file needs init_file");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
}

TextureMap init_texture(int resolution, InitMode mode, Rng& rng, const std::filesystem::path& file) {
  switch (mode) {
    case InitMode::Gray:
      if (resolution < 1) throw ShapeError("texture resolution must be positive");
      return TextureMap(resolution, resolution, 0.5);
    case InitMode::RandomUniform: {
      if (resolution < 1) throw ShapeError("texture resolution must be positive");
      TextureMap t(resolution, resolution);
      for (double& v : t.texels().values()) v = uniform01(rng);
      return t;
    }
    case InitMode::FromFile:
      try {
        return import_texture(file);
      } catch (const IoError& e) {
        throw FormatError(std::string("cannot initialise texture from file: ") + e.what());
      }
  }
  throw ConfigError("unknown init mode");
}

namespace {

std::pair<std::size_t, std::uint64_t> cache_key(std::size_t entry, double crop) {
  return {entry, std::bit_cast<std::uint64_t>(crop)};
}

struct SampleResult {
  Image image_grad;  // d(objective / B) / d(rendered adversarial image)
  double divergence = 0.0;
  double smoothness = 0.0;
  std::map<std::string, double> key_sizes;
  std::optional<FeatureStack> new_clean;
  std::optional<KeyFeatureSet> new_keys;
};

}  // namespace

const FeatureStack* CleanFeatureCache::find(std::size_t entry, double crop) const {
  const auto it = map_.find(cache_key(entry, crop));
  return it == map_.end() ? nullptr : &it->second;
}

void CleanFeatureCache::put(std::size_t entry, double crop, FeatureStack fs) {
  map_.insert_or_assign(cache_key(entry, crop), std::move(fs));
}

BatchGradient batch_objective(const RunState& state, const std::vector<BatchItem>& batch, const StepContext& ctx,
                              const RunConfig& config) {
  if (batch.empty()) throw PreconditionError("batch is empty");
  if (!ctx.manifest || !ctx.samples || !ctx.victim || !ctx.benign)
    throw PreconditionError("step context is incomplete");
  const auto& ac = config.attack;
  if (ac.reselect_every > 1 && !ctx.key_cache) throw PreconditionError("reselect_every > 1 needs a key cache");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool smooth_rendered = ac.smooth_target == SmoothnessTarget::RenderedForeground;

  // Decoding and cache lookups stay on this thread.
  std::vector<const SceneSample*> samples;
  std::vector<const FeatureStack*> cached_clean;
  std::vector<const KeyFeatureSet*> cached_keys;
  for (const auto& item : batch) {
    samples.push_back(&ctx.samples->get(*ctx.manifest, item.entry));
  }
  for (const auto& item : batch) {
    cached_clean.push_back(ctx.clean_cache ? ctx.clean_cache->find(item.entry, item.transform.crop_fraction)
                                           : nullptr);
    const KeyFeatureSet* k = nullptr;
    if (ac.reselect_every > 1) {
      const auto it = ctx.key_cache->sets.find(cache_key(item.entry, item.transform.crop_fraction));
      if (it != ctx.key_cache->sets.end() && state.iteration - it->second.snapshot_iteration < ac.reselect_every)
        k = &it->second;
    }
    cached_keys.push_back(k);
  }

  std::vector<SampleResult> results(batch.size());
  auto work = [&](std::size_t i) {
    const auto& item = batch[i];
    const SceneSample& s = *samples[i];
    SampleResult& res = results[i];
    const Image adv_img = render(s, state.texture);
    const Image adv_phi = apply_phi(adv_img, item.transform);
    FeatureTrace trace = extract_features_traced(*ctx.victim, adv_phi);
    FeatureStack adv = trace.features;
    // restrict to the attack layers, in victim order
    FeatureStack adv_sel;
    for (const auto& name : ctx.victim->spec().attack_layers) adv_sel.layers.push_back({name, adv.layer(name)});

    const FeatureStack* clean = cached_clean[i];
    if (!clean) {
      const Image clean_phi = apply_phi(render(s, *ctx.benign), item.transform);
      res.new_clean = extract_features(*ctx.victim, clean_phi);
      clean = &*res.new_clean;
    }
    const KeyFeatureSet* keys = cached_keys[i];
    if (!keys) {
      res.new_keys = select_key_features(*clean, adv_sel, ac.delta);
      res.new_keys->snapshot_iteration = state.iteration;
      keys = &*res.new_keys;
    }
    for (const auto& [name, z] : keys->indices) res.key_sizes[name] = static_cast<double>(z.size());

    FeatureStack grad_sel = adv_sel.zeros_like();
    res.divergence = feature_divergence_loss_grad(*clean, adv_sel, *keys, ac.layer_weights, grad_sel, inv_b);
    FeatureStack grad_full = adv.zeros_like();
    for (auto& l : grad_sel.layers) grad_full.layer(l.name) = std::move(l.values);
    const Image g_phi = features_backward(*ctx.victim, trace, grad_full);
    res.image_grad = apply_phi_backward(g_phi, adv_img.height(), adv_img.width(), item.transform);
    if (smooth_rendered) {
      res.smoothness = smoothness_loss_masked(adv_img, s.mask);
      if (ac.lambda_smooth != 0.0)
        smoothness_loss_masked_grad(adv_img, s.mask, res.image_grad, ac.lambda_smooth * inv_b);
    }
  };

  const std::size_t n = batch.size();
  const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(config.threads), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += nt) work(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Fixed-order reduction.
  BatchGradient out;
  out.texture_grad = Image(state.texture.height(), state.texture.width(), 3);
  for (std::size_t i = 0; i < n; ++i) {
    SampleResult& r = results[i];
    render_backward(*samples[i], r.image_grad, out.texture_grad);
    out.terms.divergence += r.divergence * inv_b;
    out.terms.smoothness += r.smoothness * inv_b;
    for (const auto& [name, z] : r.key_sizes) out.key_sizes[name] += z * inv_b;
    if (r.new_clean && ctx.clean_cache)
      ctx.clean_cache->put(batch[i].entry, batch[i].transform.crop_fraction, std::move(*r.new_clean));
    if (r.new_keys && ctx.key_cache)
      ctx.key_cache->sets.insert_or_assign(cache_key(batch[i].entry, batch[i].transform.crop_fraction),
                                           std::move(*r.new_keys));
  }
  if (!smooth_rendered) {
    out.terms.smoothness = smoothness_loss(state.texture.texels());
    if (ac.lambda_smooth != 0.0) smoothness_loss_grad(state.texture.texels(), out.texture_grad, ac.lambda_smooth);
  }
  out.terms.total = out.terms.divergence + ac.lambda_smooth * out.terms.smoothness;
  return out;
}

namespace {

void write_bytes(std::ostream& os, const void* p, std::size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

template <class T>
void put(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw FormatError("state file is truncated");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  write_bytes(os, s.data(), s.size());
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 24)) throw FormatError("state file string is implausibly long");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw FormatError("state file is truncated");
  return s;
}

void put_image(std::ostream& os, const Image& im) {
  put<std::int32_t>(os, im.height());
  put<std::int32_t>(os, im.width());
  put<std::int32_t>(os, im.channels());
  write_bytes(os, im.data(), im.size() * sizeof(double));
}

Image get_image(std::istream& is) {
  const auto h = get<std::int32_t>(is), w = get<std::int32_t>(is), c = get<std::int32_t>(is);
  if (h < 0 || w < 0 || c < 0 || static_cast<std::int64_t>(h) * w * c > (1LL << 28))
    throw FormatError("state file image header is corrupt");
  Image im(h, w, c);
  is.read(reinterpret_cast<char*>(im.data()), static_cast<std::streamsize>(im.size() * sizeof(double)));
  if (!is) throw FormatError("state file is truncated");
  return im;
}

constexpr char kStateMagic[8] = {'U', 'C', 'A', 'S', 'T', 'A', 'T', 'E'};

void dump_nonfinite(const RunState& state, const BatchGradient& g, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  save_state(state, dir / "state.bin");
  std::ofstream os(dir / "gradient.bin", std::ios::binary);
  put_image(os, g.texture_grad);
  std::ofstream js(dir / "loss.json");
  js << nlohmann::json{{"iteration", state.iteration},
                       {"divergence", std::isfinite(g.terms.divergence) ? nlohmann::json(g.terms.divergence)
                                                                        : nlohmann::json("non-finite")},
                       {"smoothness", std::isfinite(g.terms.smoothness) ? nlohmann::json(g.terms.smoothness)
                                                                        : nlohmann::json("non-finite")}}
            .dump(2);
}

}  // namespace

void step(RunState& state, const std::vector<BatchItem>& batch, const StepContext& ctx, const RunConfig& config,
          const std::filesystem::path& dump_dir) {
  BatchGradient g = batch_objective(state, batch, ctx, config);
  bool finite = std::isfinite(g.terms.total);
  for (double v : g.texture_grad.values()) finite = finite && std::isfinite(v);
  if (!finite) {
    if (!dump_dir.empty()) dump_nonfinite(state, g, dump_dir);
    throw NonFiniteLoss("non-finite objective or gradient at iteration " + std::to_string(state.iteration) +
                        (dump_dir.empty() ? "" : "; state dumped to " + dump_dir.string()));
  }

  auto tex = state.texture.texels().values();
  const auto grad = g.texture_grad.values();
  const double lr = config.learning_rate;
  switch (config.optimizer) {
    case OptimizerKind::GradientDescent:
      for (std::size_t i = 0; i < tex.size(); ++i) tex[i] -= lr * grad[i];
      break;
    case OptimizerKind::Momentum: {
      if (!state.moment1.same_shape(g.texture_grad)) state.moment1 = Image(g.texture_grad.height(), g.texture_grad.width(), 3);
      auto m = state.moment1.values();
      for (std::size_t i = 0; i < tex.size(); ++i) {
        m[i] = config.momentum * m[i] + grad[i];
        tex[i] -= lr * m[i];
      }
      break;
    }
    case OptimizerKind::Adam: {
      if (!state.moment1.same_shape(g.texture_grad)) {
        state.moment1 = Image(g.texture_grad.height(), g.texture_grad.width(), 3);
        state.moment2 = Image(g.texture_grad.height(), g.texture_grad.width(), 3);
      }
      auto m = state.moment1.values();
      auto v = state.moment2.values();
      const double b1 = config.adam_beta1, b2 = config.adam_beta2;
      const double t = static_cast<double>(state.iteration + 1);
      const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
      for (std::size_t i = 0; i < tex.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        tex[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_eps);
      }
      break;
    }
  }
  state.texture.clamp();

  LossRecord rec;
  rec.iteration = state.iteration;
  rec.divergence = g.terms.divergence;
  rec.smoothness = g.terms.smoothness;
  rec.total = g.terms.total;
  rec.key_sizes = std::move(g.key_sizes);
  state.loss_history.push_back(std::move(rec));
  ++state.iteration;
}

void save_state(const RunState& state, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write state file " + path.string());
    write_bytes(os, kStateMagic, sizeof kStateMagic);
    put<std::uint32_t>(os, kStateVersion);
    put<std::int64_t>(os, state.iteration);
    put_string(os, state.rng_state);
    put_image(os, state.texture.texels());
    put_image(os, state.moment1);
    put_image(os, state.moment2);
    put<std::uint64_t>(os, state.loss_history.size());
    for (const auto& r : state.loss_history) {
      put<std::int64_t>(os, r.iteration);
      put<double>(os, r.divergence);
      put<double>(os, r.smoothness);
      put<double>(os, r.total);
      put<std::uint64_t>(os, r.key_sizes.size());
      for (const auto& [k, v] : r.key_sizes) {
        put_string(os, k);
        put<double>(os, v);
      }
    }
    if (!os) throw IoError("failed writing state file " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

RunState load_state(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFile("state file not found: " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kStateMagic, sizeof magic) != 0)
    throw FormatError(path.string() + " is not a run state file");
  const auto version = get<std::uint32_t>(is);
  if (version != kStateVersion)
    throw VersionError("state file version " + std::to_string(version) + ", expected " +
                       std::to_string(kStateVersion));
  RunState s;
  s.iteration = get<std::int64_t>(is);
  s.rng_state = get_string(is);
  s.texture = TextureMap(get_image(is));
  s.moment1 = get_image(is);
  s.moment2 = get_image(is);
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 24)) throw FormatError("state file history is implausibly long");
  for (std::uint64_t i = 0; i < n; ++i) {
    LossRecord r;
    r.iteration = get<std::int64_t>(is);
    r.divergence = get<double>(is);
    r.smoothness = get<double>(is);
    r.total = get<double>(is);
    const auto k = get<std::uint64_t>(is);
    if (k > 64) throw FormatError("state file record is corrupt");
    for (std::uint64_t j = 0; j < k; ++j) {
      std::string name = get_string(is);
      r.key_sizes[name] = get<double>(is);
    }
    s.loss_history.push_back(std::move(r));
  }
  return s;
}

std::string loss_record_json(const LossRecord& r) {
  nlohmann::ordered_json j;
  j["iteration"] = r.iteration;
  j["divergence"] = r.divergence;
  j["smoothness"] = r.smoothness;
  j["total"] = r.total;
  j["key_sizes"] = r.key_sizes;
  return j.dump();
}

namespace {

std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(Rng& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw FormatError("state file carries an unreadable random stream");
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& dir) {
  std::filesystem::path best;
  if (!std::filesystem::exists(dir)) return best;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("ckpt_", 0) == 0 && e.path().extension() == ".state" && (best.empty() || e.path() > best))
      best = e.path();
  }
  return best;
}

}  // namespace

RunResult run(const RunConfig& config, const DatasetManifest& manifest, const Victim& victim,
              const std::filesystem::path& out_dir, bool resume, const StepCallback& on_step) {
  config.validate();
  if (manifest.empty()) throw PreconditionError("manifest has no entries");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "checkpoints");

  const PoseIndex index(manifest, config.sampling);
  const TextureMap benign = benign_texture(config.texture_size, config.texture_size);

  RunResult result;
  RunState& state = result.state;
  Rng sampler(mix_seed(config.seed ^ 0x5a5a5a5a5a5a5a5aULL) ^ config.sampling.seed);
  const fs::path ckpt = resume ? latest_checkpoint(out_dir / "checkpoints") : fs::path{};
  if (!ckpt.empty()) {
    state = load_state(ckpt);
    rng_from_string(sampler, state.rng_state);
    spdlog::info("resuming from {} at iteration {}", ckpt.string(), state.iteration);
  } else {
    Rng init_rng(mix_seed(config.seed));
    state.texture = init_texture(config.texture_size, config.init, init_rng, config.init_file);
  }

  const auto n = static_cast<long>(manifest.size());
  result.steps_per_epoch = (n + config.sampling.batch_size - 1) / config.sampling.batch_size;
  long total = result.steps_per_epoch * config.max_epochs;
  if (config.max_steps > 0) total = std::min(total, config.max_steps);

  {
    // The log always mirrors loss_history, so a resumed run has no gaps.
    std::ofstream log(out_dir / "loss_log.jsonl", std::ios::trunc);
    for (const auto& r : state.loss_history) log << loss_record_json(r) << '\n';
  }
  std::ofstream log(out_dir / "loss_log.jsonl", std::ios::app);

  SampleCache samples(std::max<std::size_t>(64, static_cast<std::size_t>(config.sampling.batch_size)));
  CleanFeatureCache clean_cache;
  KeyCache key_cache;
  StepContext ctx{&manifest, &samples, &victim, &benign, config.cache_clean_features ? &clean_cache : nullptr,
                  &key_cache};

  while (state.iteration < total) {
    const auto batch = sample_batch(index, config.sampling, config.schedule, sampler);
    step(state, batch, ctx, config, out_dir / "nonfinite_dump");
    state.rng_state = rng_to_string(sampler);
    log << loss_record_json(state.loss_history.back()) << '\n' << std::flush;
    if (state.loss_history.back().key_sizes.size() && std::all_of(state.loss_history.back().key_sizes.begin(),
                                                                   state.loss_history.back().key_sizes.end(),
                                                                   [](const auto& kv) { return kv.second == 0.0; }))
      spdlog::warn("iteration {}: every key-feature set is empty; the step carried no divergence signal",
                   state.iteration - 1);
    if (config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%08ld", state.iteration);
      save_state(state, out_dir / "checkpoints" / (std::string(name) + ".state"));
      export_texture(state.texture, out_dir / "checkpoints" / (std::string(name) + ".png"));
    }
    if (on_step) on_step(state);
  }
  state.rng_state = rng_to_string(sampler);
  save_state(state, out_dir / "state_final.bin");
  result.final_texture = out_dir / "texture_final.png";
  export_texture(state.texture, result.final_texture);
  return result;
}

}  // namespace uca
