#include "uca/victim.hpp"

#include <algorithm>
#include <cmath>

#include "uca/digest.hpp"
#include "uca/error.hpp"
#include "uca/surrogate.hpp"
#include "uca/transforms.hpp"

namespace uca {

bool FeatureStack::has(std::string_view name) const noexcept {
  return std::any_of(layers.begin(), layers.end(), [&](const FeatureLayer& l) { return l.name == name; });
}

const Matrix& FeatureStack::layer(std::string_view name) const {
  for (const auto& l : layers)
    if (l.name == name) return l.values;
  throw LayerNotExposed("layer '" + std::string(name) + "' is not in the feature stack");
}

Matrix& FeatureStack::layer(std::string_view name) {
  return const_cast<Matrix&>(static_cast<const FeatureStack&>(*this).layer(name));
}

std::vector<std::string> FeatureStack::names() const {
  std::vector<std::string> out;
  for (const auto& l : layers) out.push_back(l.name);
  return out;
}

FeatureStack FeatureStack::zeros_like() const {
  FeatureStack out;
  for (const auto& l : layers) out.layers.push_back({l.name, Matrix(l.values.rows(), l.values.cols())});
  return out;
}

std::string_view scenario_name(Scenario s) noexcept {
  switch (s) {
    case Scenario::Planning: return "planning";
    case Scenario::Prediction: return "prediction";
    case Scenario::Perception: return "perception";
  }
  return "planning";
}

Scenario parse_scenario(std::string_view name) {
  for (Scenario s : kAllScenarios)
    if (scenario_name(s) == name) return s;
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

namespace {

Image to_input_size(const Victim& victim, const Image& image) {
  const auto& s = victim.spec();
  if (image.height() == s.input_height && image.width() == s.input_width) return image;
  return rescale(image, s.input_height, s.input_width);
}

std::string input_digest(const Image& image) {
  return fnv1a_hex(std::as_bytes(std::span(image.data(), image.size())));
}

}  // namespace

FeatureStack extract_features(const Victim& victim, const Image& image, std::span<const std::string> layers) {
  const std::span<const std::string> wanted = layers.empty() ? std::span(victim.spec().attack_layers) : layers;
  const auto exposed = victim.exposed_layers();
  for (const auto& name : wanted) {
    if (std::find(exposed.begin(), exposed.end(), name) == exposed.end())
      throw LayerNotExposed("victim '" + victim.spec().name + "' does not expose layer '" + name + "'");
  }
  const Image input = to_input_size(victim, image);
  FeatureStack all = victim.forward(input, nullptr);
  FeatureStack out;
  for (const auto& name : wanted) out.layers.push_back({name, std::move(all.layer(name))});
  out.provenance = victim.spec().name + "@" + input_digest(input);
  return out;
}

FeatureTrace extract_features_traced(const Victim& victim, const Image& image) {
  FeatureTrace trace;
  trace.source_height = image.height();
  trace.source_width = image.width();
  const Image input = to_input_size(victim, image);
  trace.features = victim.forward(input, &trace.tape);
  trace.features.provenance = victim.spec().name + "@" + input_digest(input);
  return trace;
}

Image features_backward(const Victim& victim, const FeatureTrace& trace, const FeatureStack& grad) {
  if (!trace.tape) throw PreconditionError("feature trace carries no activations");
  Image g = victim.backward(*trace.tape, grad);
  if (g.height() == trace.source_height && g.width() == trace.source_width) return g;
  return rescale_backward(g, trace.source_height, trace.source_width);
}

std::string generate(const Victim& victim, const Image& image, std::string_view prompt) {
  if (prompt.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw PreconditionError("generate needs a nonempty prompt");
  return victim.generate_from_input(to_input_size(victim, image), prompt);
}

std::vector<std::string> Victim::generate_many_from_input(const Image& input,
                                                         std::span<const std::string> prompts) const {
  std::vector<std::string> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(generate_from_input(input, p));
  return out;
}

std::vector<std::string> generate_many(const Victim& victim, const Image& image, std::span<const std::string> prompts) {
  for (const auto& p : prompts)
    if (p.find_first_not_of(" \t\r\n") == std::string::npos) throw PreconditionError("generate needs a nonempty prompt");
  return victim.generate_many_from_input(to_input_size(victim, image), prompts);
}

std::vector<LayerStats> feature_stats(const Victim& victim, std::span<const Image> images) {
  if (images.empty()) throw PreconditionError("feature_stats needs at least one image");
  std::vector<LayerStats> out;
  std::vector<double> sum, sum_sq;
  std::vector<std::size_t> count;
  for (const Image& img : images) {
    const FeatureStack fs = extract_features(victim, img);
    if (out.empty()) {
      for (const auto& l : fs.layers) out.push_back({l.name, 0.0, 0.0});
      sum.assign(out.size(), 0.0);
      sum_sq.assign(out.size(), 0.0);
      count.assign(out.size(), 0);
    }
    for (std::size_t i = 0; i < fs.layers.size(); ++i) {
      for (double v : fs.layers[i].values.values()) {
        sum[i] += v;
        sum_sq[i] += v * v;
      }
      count[i] += fs.layers[i].values.size();
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (count[i] == 0) continue;
    const double n = static_cast<double>(count[i]);
    out[i].mean = sum[i] / n;
    out[i].variance = std::max(0.0, sum_sq[i] / n - out[i].mean * out[i].mean);
  }
  return out;
}

// ---------------------------------------------------------------------------

StubVictim::StubVictim(std::vector<std::pair<std::string, std::pair<int, int>>> layers, int input_height,
                       int input_width)
    : layers_(std::move(layers)) {
  spec_.name = "stub";
  spec_.input_height = input_height;
  spec_.input_width = input_width;
  for (const auto& l : layers_) spec_.attack_layers.push_back(l.first);
}

std::vector<std::string> StubVictim::exposed_layers() const { return spec_.attack_layers; }

FeatureStack StubVictim::forward(const Image& /*input*/, std::unique_ptr<Tape>* tape) const {
  FeatureStack fs;
  for (const auto& [name, shape] : layers_) fs.layers.push_back({name, Matrix(shape.first, shape.second)});
  if (tape) *tape = std::make_unique<Tape>();
  return fs;
}

Image StubVictim::backward(const Tape& /*tape*/, const FeatureStack& /*grad*/) const {
  return Image(spec_.input_height, spec_.input_width, 3);
}

std::string StubVictim::generate_from_input(const Image& /*input*/, std::string_view /*prompt*/) const {
  return "stop";
}

// ---------------------------------------------------------------------------

VictimRegistry::VictimRegistry() {
  factories_["surrogate"] = [](const nlohmann::json& opts) -> std::unique_ptr<Victim> {
    if (opts.contains("weights")) {
      return std::make_unique<SurrogateVictim>(
          SurrogateVictim::load(opts.at("weights").get<std::string>()));
    }
    SurrogateConfig cfg;
    if (opts.contains("seed")) cfg.seed = opts.at("seed").get<std::uint64_t>();
    return std::make_unique<SurrogateVictim>(cfg);
  };
  factories_["stub"] = [](const nlohmann::json&) -> std::unique_ptr<Victim> {
    return std::make_unique<StubVictim>();
  };
  // Interface-only adapters: real VLM weights are not bundled.
  for (const char* name : {"dolphins", "llava", "openflamingo"}) {
    factories_[name] = [n = std::string(name)](const nlohmann::json&) -> std::unique_ptr<Victim> {
      throw VictimUnavailable("no loader registered for external victim '" + n +
                              "'; see docs/victims.md for the adapter contract");
    };
  }
}

VictimRegistry& VictimRegistry::instance() {
  static VictimRegistry registry;
  return registry;
}

void VictimRegistry::add(const std::string& name, Factory factory) { factories_[name] = std::move(factory); }

bool VictimRegistry::contains(const std::string& name) const { return factories_.count(name) != 0; }

std::vector<std::string> VictimRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : factories_) out.push_back(k);
  return out;
}

std::unique_ptr<Victim> VictimRegistry::create(const std::string& name, const nlohmann::json& options) const {
  const auto it = factories_.find(name);
  if (it == factories_.end()) throw VictimUnavailable("unknown victim '" + name + "'");
  return it->second(options);
}

}  // namespace uca
