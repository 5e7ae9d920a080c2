#include "uca/divergence.hpp"

#include <cmath>

#include "uca/error.hpp"
#include "uca/simd/kernels.hpp"

namespace uca {

void AttackConfig::validate() const {
  if (!(delta >= -1.0 && delta <= 1.0)) throw ConfigError("delta must lie in [-1, 1]");
  bool any = false;
  for (const auto& [name, a] : layer_weights) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("layer weight for '" + name + "' must be >= 0");
    any = any || a > 0.0;
  }
  if (!any) throw ConfigError("at least one layer weight must be positive");
  if (!(lambda_smooth >= 0.0) || !std::isfinite(lambda_smooth)) throw ConfigError("lambda_smooth must be >= 0");
  if (reselect_every < 1) throw ConfigError("reselect_every must be >= 1");
}

std::string_view smoothness_target_name(SmoothnessTarget t) noexcept {
  return t == SmoothnessTarget::Texture ? "texture" : "rendered";
}

SmoothnessTarget parse_smoothness_target(std::string_view name) {
  if (name == "rendered") return SmoothnessTarget::RenderedForeground;
  if (name == "texture") return SmoothnessTarget::Texture;
  throw ConfigError("smooth_target must be 'rendered' or 'texture', got '" + std::string(name) + "'");
}

std::size_t KeyFeatureSet::size(const std::string& layer) const {
  const auto it = indices.find(layer);
  return it == indices.end() ? 0 : it->second.size();
}

bool KeyFeatureSet::all_empty() const {
  for (const auto& [k, v] : indices)
    if (!v.empty()) return false;
  return true;
}

double cosine(const double* a, const double* b, std::size_t n) {
  const double ab = simd::dot(a, b, n);
  const double aa = simd::dot(a, a, n);
  const double bb = simd::dot(b, b, n);
  if (aa <= 0.0 || bb <= 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

// d/db [a.b / (|a||b|)] = a/(|a||b|) - (a.b) b / (|a| |b|^3)
void cosine_grad_b(const double* a, const double* b, std::size_t n, double scale, double* grad_b) {
  const double ab = simd::dot(a, b, n);
  const double aa = simd::dot(a, a, n);
  const double bb = simd::dot(b, b, n);
  if (aa <= 0.0 || bb <= 0.0) return;
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  simd::axpy(scale / (na * nb), a, grad_b, n);
  simd::axpy(-scale * ab / (na * nb * bb), b, grad_b, n);
}

namespace {

void check_pair(const FeatureStack& clean, const FeatureStack& adv) {
  if (clean.layers.size() != adv.layers.size()) throw ShapeMismatch("feature stacks have different layer counts");
  for (std::size_t l = 0; l < clean.layers.size(); ++l) {
    const auto& c = clean.layers[l];
    const auto& a = adv.layers[l];
    if (c.name != a.name) throw ShapeMismatch("layer order differs: '" + c.name + "' vs '" + a.name + "'");
    if (!c.values.same_shape(a.values)) throw ShapeMismatch("layer '" + c.name + "' shapes differ");
  }
}

double divergence_impl(const FeatureStack& clean, const FeatureStack& adv, const KeyFeatureSet& keys,
                       const std::map<std::string, double>& weights, FeatureStack* grad, double scale) {
  check_pair(clean, adv);
  if (grad) check_pair(adv, *grad);
  double total = 0.0;
  for (std::size_t l = 0; l < adv.layers.size(); ++l) {
    const auto& name = adv.layers[l].name;
    const auto w = weights.find(name);
    if (w == weights.end() || w->second == 0.0) continue;
    const auto z = keys.indices.find(name);
    if (z == keys.indices.end() || z->second.empty()) continue;
    const Matrix& cm = clean.layers[l].values;
    const Matrix& am = adv.layers[l].values;
    const auto d = static_cast<std::size_t>(am.cols());
    const double coef = w->second / static_cast<double>(z->second.size());
    double sum = 0.0;
    for (int i : z->second) {
      if (i < 0 || i >= am.rows()) throw ShapeMismatch("key index out of range for layer '" + name + "'");
      sum += cosine(cm.row(i), am.row(i), d);
      if (grad) cosine_grad_b(cm.row(i), am.row(i), d, scale * coef, grad->layers[l].values.row(i));
    }
    total += coef * sum;
  }
  return total;
}

}  // namespace

KeyFeatureSet select_key_features(const FeatureStack& clean, const FeatureStack& adv, double delta) {
  check_pair(clean, adv);
  KeyFeatureSet keys;
  for (std::size_t l = 0; l < clean.layers.size(); ++l) {
    const Matrix& c = clean.layers[l].values;
    const Matrix& a = adv.layers[l].values;
    auto& z = keys.indices[clean.layers[l].name];
    for (int i = 0; i < c.rows(); ++i)
      if (cosine(c.row(i), a.row(i), static_cast<std::size_t>(c.cols())) <= delta) z.push_back(i);
  }
  return keys;
}

double feature_divergence_loss(const FeatureStack& clean, const FeatureStack& adv, const KeyFeatureSet& keys,
                               const std::map<std::string, double>& layer_weights) {
  return divergence_impl(clean, adv, keys, layer_weights, nullptr, 1.0);
}

double feature_divergence_loss_grad(const FeatureStack& clean, const FeatureStack& adv, const KeyFeatureSet& keys,
                                    const std::map<std::string, double>& layer_weights, FeatureStack& grad_adv,
                                    double scale) {
  return divergence_impl(clean, adv, keys, layer_weights, &grad_adv, scale);
}

double smoothness_loss(const Image& image) {
  const int h = image.height(), w = image.width(), c = image.channels();
  const auto row_len = static_cast<std::size_t>(w) * c;
  double s = 0.0;
  for (int r = 0; r < h; ++r) {
    const double* p = image.row_ptr(r);
    // horizontal pairs: element k vs element k + c within the row
    if (w > 1) s += simd::sq_diff_sum(p, p + c, row_len - c);
    if (r + 1 < h) s += simd::sq_diff_sum(p, image.row_ptr(r + 1), row_len);
  }
  return s;
}

double smoothness_loss_masked(const Image& image, const Mask& mask) {
  if (mask.height() != image.height() || mask.width() != image.width())
    throw ShapeMismatch("mask and image sizes differ");
  const int h = image.height(), w = image.width(), c = image.channels();
  double s = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(r, x)) continue;
      const double* p = image.row_ptr(r) + static_cast<std::size_t>(x) * c;
      if (x + 1 < w && mask.at(r, x + 1)) s += simd::sq_diff_sum(p, p + c, static_cast<std::size_t>(c));
      if (r + 1 < h && mask.at(r + 1, x))
        s += simd::sq_diff_sum(p, image.row_ptr(r + 1) + static_cast<std::size_t>(x) * c, static_cast<std::size_t>(c));
    }
  }
  return s;
}

namespace {

inline void pair_grad(const double* a, const double* b, double* ga, double* gb, int c, double scale) {
  for (int k = 0; k < c; ++k) {
    const double d = 2.0 * scale * (a[k] - b[k]);
    ga[k] += d;
    gb[k] -= d;
  }
}

}  // namespace

void smoothness_loss_grad(const Image& image, Image& grad, double scale) {
  if (!grad.same_shape(image)) throw ShapeMismatch("gradient buffer shape differs from image");
  const int h = image.height(), w = image.width(), c = image.channels();
  for (int r = 0; r < h; ++r) {
    for (int x = 0; x < w; ++x) {
      const std::size_t off = static_cast<std::size_t>(x) * c;
      const double* p = image.row_ptr(r) + off;
      double* g = grad.row_ptr(r) + off;
      if (x + 1 < w) pair_grad(p, p + c, g, g + c, c, scale);
      if (r + 1 < h) pair_grad(p, image.row_ptr(r + 1) + off, g, grad.row_ptr(r + 1) + off, c, scale);
    }
  }
}

void smoothness_loss_masked_grad(const Image& image, const Mask& mask, Image& grad, double scale) {
  if (!grad.same_shape(image)) throw ShapeMismatch("gradient buffer shape differs from image");
  if (mask.height() != image.height() || mask.width() != image.width())
    throw ShapeMismatch("mask and image sizes differ");
  const int h = image.height(), w = image.width(), c = image.channels();
  for (int r = 0; r < h; ++r) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(r, x)) continue;
      const std::size_t off = static_cast<std::size_t>(x) * c;
      const double* p = image.row_ptr(r) + off;
      double* g = grad.row_ptr(r) + off;
      if (x + 1 < w && mask.at(r, x + 1)) pair_grad(p, p + c, g, g + c, c, scale);
      if (r + 1 < h && mask.at(r + 1, x))
        pair_grad(p, image.row_ptr(r + 1) + off, g, grad.row_ptr(r + 1) + off, c, scale);
    }
  }
}

ObjectiveTerms total_objective(const FeatureStack& clean, const FeatureStack& adv, const KeyFeatureSet& keys,
                               const Image& smooth_operand, const Mask* mask, const AttackConfig& config) {
  ObjectiveTerms t;
  t.divergence = feature_divergence_loss(clean, adv, keys, config.layer_weights);
  t.smoothness = mask ? smoothness_loss_masked(smooth_operand, *mask) : smoothness_loss(smooth_operand);
  t.total = t.divergence + config.lambda_smooth * t.smoothness;
  return t;
}

}  // namespace uca
