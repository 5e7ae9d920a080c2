#pragma once

// Physical-robustness transform: centre crop followed by bilinear rescale,
// plus the scale schedule it is sampled from.

#include <string>
#include <vector>

#include "uca/random.hpp"
#include "uca/tensor.hpp"

namespace uca {

struct TransformParams {
  double crop_fraction = 1.0;  // w/W = h/H
  int output_height = 224;
  int output_width = 224;
  std::string scale_label;

  /// PreconditionError unless crop_fraction in (0,1] and output size positive.
  void validate() const;
  friend bool operator==(const TransformParams&, const TransformParams&) = default;
};

struct ScheduleEntry {
  double crop_fraction = 1.0;
  double weight = 1.0;
  int output_height = 224;
  int output_width = 224;
  std::string label;
};
using TransformSchedule = std::vector<ScheduleEntry>;

/// Crop fractions {1.0, 0.5} ("10m", "5m"), equal weights.
TransformSchedule default_schedule(int output_height = 224, int output_width = 224);
/// Single full-frame entry (multi-scale disabled).
TransformSchedule identity_schedule(int output_height = 224, int output_width = 224);

struct CropWindow {
  int row0 = 0;
  int col0 = 0;
  int height = 0;
  int width = 0;
};

/// Start indices floor((W-w)/2), floor((H-h)/2). Throws CropTooLarge when
/// w > W or h > H, ShapeError when w or h is not positive.
CropWindow crop_window(int image_height, int image_width, int h, int w);

Image center_crop(const Image& image, int w, int h);

/// Bilinear, align-corners-off: src = (dst + 0.5) * in/out - 0.5, clamped to
/// the valid range. ShapeError on empty input or non-positive target.
Image rescale(const Image& image, int output_height, int output_width);
/// Adjoint of rescale.
Image rescale_backward(const Image& grad_output, int input_height, int input_width);

/// Crop window for a fraction: w = max(1, round(f W)), h likewise.
CropWindow phi_window(int image_height, int image_width, double crop_fraction);

/// center_crop then rescale.
Image apply_phi(const Image& image, const TransformParams& params);
/// d(loss)/d(input) given d(loss)/d(apply_phi output); zero outside the crop.
Image apply_phi_backward(const Image& grad_output, int input_height, int input_width,
                         const TransformParams& params);

/// Draws an entry with probability proportional to its weight. Throws
/// EmptySchedule on an empty schedule.
TransformParams sample_transform(Rng& rng, const TransformSchedule& schedule);

}  // namespace uca
