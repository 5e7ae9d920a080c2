#pragma once

// Pluggable victim model: differentiable multi-layer feature extraction and
// greedy text generation. See docs/victims.md for the adapter contract.

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uca/tensor.hpp"

namespace uca {

struct FeatureLayer {
  std::string name;
  Matrix values;  // N_l rows x D_l channels
};

/// Per-layer features in the victim's fixed layer order.
struct FeatureStack {
  std::vector<FeatureLayer> layers;
  std::string provenance;  // "<victim>@<input digest>"

  bool has(std::string_view name) const noexcept;
  /// Throws LayerNotExposed.
  const Matrix& layer(std::string_view name) const;
  Matrix& layer(std::string_view name);
  std::vector<std::string> names() const;

  /// Same layer names in the same order, each filled with zeros.
  FeatureStack zeros_like() const;
};

struct VictimSpec {
  std::string name;
  std::vector<std::string> attack_layers;
  int input_height = 224;
  int input_width = 224;
  std::string prompt_template = "<image>\n{prompt}";
};

enum class Scenario { Planning, Prediction, Perception };
inline constexpr Scenario kAllScenarios[] = {Scenario::Planning, Scenario::Prediction, Scenario::Perception};
std::string_view scenario_name(Scenario s) noexcept;
Scenario parse_scenario(std::string_view name);  // ConfigError on unknown names

class Victim {
 public:
  /// Opaque activation record kept by forward() for backward().
  struct Tape {
    virtual ~Tape() = default;
  };

  virtual ~Victim() = default;

  virtual const VictimSpec& spec() const noexcept = 0;
  virtual std::vector<std::string> exposed_layers() const = 0;

  /// Features at every exposed layer for an image already at input size.
  /// When `tape` is non-null it receives what backward() needs.
  virtual FeatureStack forward(const Image& input, std::unique_ptr<Tape>* tape) const = 0;

  /// d(loss)/d(input) given d(loss)/d(features). Layers missing from `grad`
  /// contribute nothing.
  virtual Image backward(const Tape& tape, const FeatureStack& grad) const = 0;

  /// Greedy answer for an image already at input size.
  virtual std::string generate_from_input(const Image& input, std::string_view prompt) const = 0;

  /// Answers to several prompts about one image. The default loops over
  /// generate_from_input; adapters can share the vision pass.
  virtual std::vector<std::string> generate_many_from_input(const Image& input,
                                                            std::span<const std::string> prompts) const;
};

/// Features at `layers` (default: the spec's attack_layers). Images of a
/// different size are bilinearly resized to the input size first. Throws
/// LayerNotExposed for unknown layers.
FeatureStack extract_features(const Victim& victim, const Image& image,
                              std::span<const std::string> layers = {});

/// Forward pass that keeps the activations needed for a backward pass.
struct FeatureTrace {
  FeatureStack features;
  std::unique_ptr<Victim::Tape> tape;
  int source_height = 0;
  int source_width = 0;
};
FeatureTrace extract_features_traced(const Victim& victim, const Image& image);
/// Gradient with respect to the image originally passed to the trace.
Image features_backward(const Victim& victim, const FeatureTrace& trace, const FeatureStack& grad);

/// Greedy decoding. Throws PreconditionError on an empty prompt.
std::string generate(const Victim& victim, const Image& image, std::string_view prompt);
std::vector<std::string> generate_many(const Victim& victim, const Image& image, std::span<const std::string> prompts);

struct LayerStats {
  std::string layer;
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and (population) variance over every feature entry of every image,
/// per exposed attack layer. Throws PreconditionError on an empty set.
std::vector<LayerStats> feature_stats(const Victim& victim, std::span<const Image> images);

/// Victim with constant zero features; generation always answers "stop".
class StubVictim final : public Victim {
 public:
  explicit StubVictim(std::vector<std::pair<std::string, std::pair<int, int>>> layers =
                          {{"encoder", {4, 3}}, {"projector", {2, 5}}},
                      int input_height = 8, int input_width = 8);
  const VictimSpec& spec() const noexcept override { return spec_; }
  std::vector<std::string> exposed_layers() const override;
  FeatureStack forward(const Image& input, std::unique_ptr<Tape>* tape) const override;
  Image backward(const Tape& tape, const FeatureStack& grad) const override;
  std::string generate_from_input(const Image& input, std::string_view prompt) const override;

 private:
  VictimSpec spec_;
  std::vector<std::pair<std::string, std::pair<int, int>>> layers_;
};

/// Name -> factory table for victims. Built-ins: "surrogate", "stub", and
/// interface-only adapters for external VLMs (which throw VictimUnavailable
/// unless a loader is registered for them).
class VictimRegistry {
 public:
  using Factory = std::function<std::unique_ptr<Victim>(const nlohmann::json& options)>;

  static VictimRegistry& instance();

  void add(const std::string& name, Factory factory);
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  /// Throws VictimUnavailable for unknown or unloadable victims.
  std::unique_ptr<Victim> create(const std::string& name, const nlohmann::json& options = {}) const;

 private:
  VictimRegistry();
  std::map<std::string, Factory> factories_;
};

}  // namespace uca
