#pragma once

// Attack objective: key-feature selection, feature divergence loss,
// smoothness regulariser and their weighted sum.

#include <map>
#include <string>
#include <vector>

#include "uca/tensor.hpp"
#include "uca/victim.hpp"

namespace uca {

enum class SmoothnessTarget { RenderedForeground, Texture };

struct AttackConfig {
  double delta = 0.8;
  std::map<std::string, double> layer_weights{{"encoder", 0.4}, {"projector", 0.6}};
  double lambda_smooth = 0.01;
  int reselect_every = 1;
  SmoothnessTarget smooth_target = SmoothnessTarget::RenderedForeground;

  /// ConfigError unless delta in [-1,1], weights >= 0 with one > 0,
  /// lambda_smooth >= 0 and reselect_every >= 1.
  void validate() const;
};

std::string_view smoothness_target_name(SmoothnessTarget t) noexcept;
SmoothnessTarget parse_smoothness_target(std::string_view name);

struct KeyFeatureSet {
  std::map<std::string, std::vector<int>> indices;  // Z_l, ascending
  long snapshot_iteration = 0;

  std::size_t size(const std::string& layer) const;
  bool all_empty() const;
};

/// cos(a, b); 0 when either vector has zero norm.
double cosine(const double* a, const double* b, std::size_t n);
/// d cos(a, b) / d b scaled by `scale`, accumulated into `grad_b`.
void cosine_grad_b(const double* a, const double* b, std::size_t n, double scale, double* grad_b);

/// Rows whose clean/adv cosine is <= delta, per layer. Throws ShapeMismatch
/// when layer names or shapes disagree.
KeyFeatureSet select_key_features(const FeatureStack& clean, const FeatureStack& adv, double delta);

/// sum_l alpha_l / |Z_l| * sum_{i in Z_l} cos(clean_l,i, adv_l,i). Layers
/// missing from `layer_weights` or with empty Z_l contribute 0.
double feature_divergence_loss(const FeatureStack& clean, const FeatureStack& adv, const KeyFeatureSet& keys,
                               const std::map<std::string, double>& layer_weights);
/// Same value; adds d(L_d)/d(adv) * scale into `grad_adv` (shaped like adv).
double feature_divergence_loss_grad(const FeatureStack& clean, const FeatureStack& adv, const KeyFeatureSet& keys,
                                    const std::map<std::string, double>& layer_weights, FeatureStack& grad_adv,
                                    double scale = 1.0);

/// Sum of squared differences over in-bounds vertical and horizontal pixel
/// pairs and all channels.
double smoothness_loss(const Image& image);
/// Only pairs with both pixels under the mask.
double smoothness_loss_masked(const Image& image, const Mask& mask);
/// Add scale * gradient into `grad` (same shape as image).
void smoothness_loss_grad(const Image& image, Image& grad, double scale = 1.0);
void smoothness_loss_masked_grad(const Image& image, const Mask& mask, Image& grad, double scale = 1.0);

struct ObjectiveTerms {
  double divergence = 0.0;
  double smoothness = 0.0;
  double total = 0.0;
};

/// L_d + lambda_s * L_smooth where L_smooth is evaluated on `smooth_operand`
/// (masked by `mask` when given).
ObjectiveTerms total_objective(const FeatureStack& clean, const FeatureStack& adv, const KeyFeatureSet& keys,
                               const Image& smooth_operand, const Mask* mask, const AttackConfig& config);

}  // namespace uca
