#include "uca/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "uca/error.hpp"

namespace uca {
namespace {

struct AxisTap {
  int i0;
  int i1;
  double w0;
  double w1;
};

std::vector<AxisTap> axis_taps(int in, int out) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(src);
    const int i1 = std::min(i0 + 1, in - 1);
    const double frac = src - i0;
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

void TransformParams::validate() const {
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) throw PreconditionError("crop_fraction must lie in (0, 1]");
  if (output_height <= 0 || output_width <= 0) throw PreconditionError("output size must be positive");
}

TransformSchedule default_schedule(int output_height, int output_width) {
  return {{1.0, 1.0, output_height, output_width, "10m"}, {0.5, 1.0, output_height, output_width, "5m"}};
}

TransformSchedule identity_schedule(int output_height, int output_width) {
  return {{1.0, 1.0, output_height, output_width, "full"}};
}

CropWindow crop_window(int image_height, int image_width, int h, int w) {
  if (w <= 0 || h <= 0) throw ShapeError("crop size must be positive");
  if (w > image_width || h > image_height)
    throw CropTooLarge("crop " + std::to_string(h) + "x" + std::to_string(w) + " exceeds image " +
                       std::to_string(image_height) + "x" + std::to_string(image_width));
  return {(image_height - h) / 2, (image_width - w) / 2, h, w};
}

Image center_crop(const Image& image, int w, int h) {
  const CropWindow win = crop_window(image.height(), image.width(), h, w);
  Image out(h, w, image.channels());
  const std::size_t row_len = static_cast<std::size_t>(w) * image.channels();
  for (int r = 0; r < h; ++r) {
    const double* src = image.row_ptr(win.row0 + r) + static_cast<std::size_t>(win.col0) * image.channels();
    std::copy(src, src + row_len, out.row_ptr(r));
  }
  return out;
}

Image rescale(const Image& image, int output_height, int output_width) {
  if (image.empty()) throw ShapeError("cannot rescale an empty image");
  if (output_height <= 0 || output_width <= 0) throw ShapeError("rescale target must be positive");
  const auto rows = axis_taps(image.height(), output_height);
  const auto cols = axis_taps(image.width(), output_width);
  const int ch = image.channels();
  Image out(output_height, output_width, ch);
  for (int r = 0; r < output_height; ++r) {
    const AxisTap& ry = rows[static_cast<std::size_t>(r)];
    const double* top = image.row_ptr(ry.i0);
    const double* bot = image.row_ptr(ry.i1);
    double* dst = out.row_ptr(r);
    for (int c = 0; c < output_width; ++c) {
      const AxisTap& cx = cols[static_cast<std::size_t>(c)];
      for (int k = 0; k < ch; ++k) {
        const double t = cx.w0 * top[cx.i0 * ch + k] + cx.w1 * top[cx.i1 * ch + k];
        const double b = cx.w0 * bot[cx.i0 * ch + k] + cx.w1 * bot[cx.i1 * ch + k];
        dst[c * ch + k] = ry.w0 * t + ry.w1 * b;
      }
    }
  }
  return out;
}

Image rescale_backward(const Image& grad_output, int input_height, int input_width) {
  if (input_height <= 0 || input_width <= 0) throw ShapeError("rescale source must be positive");
  const auto rows = axis_taps(input_height, grad_output.height());
  const auto cols = axis_taps(input_width, grad_output.width());
  const int ch = grad_output.channels();
  Image grad(input_height, input_width, ch);
  for (int r = 0; r < grad_output.height(); ++r) {
    const AxisTap& ry = rows[static_cast<std::size_t>(r)];
    double* top = grad.row_ptr(ry.i0);
    double* bot = grad.row_ptr(ry.i1);
    const double* g = grad_output.row_ptr(r);
    for (int c = 0; c < grad_output.width(); ++c) {
      const AxisTap& cx = cols[static_cast<std::size_t>(c)];
      for (int k = 0; k < ch; ++k) {
        const double v = g[c * ch + k];
        top[cx.i0 * ch + k] += ry.w0 * cx.w0 * v;
        top[cx.i1 * ch + k] += ry.w0 * cx.w1 * v;
        bot[cx.i0 * ch + k] += ry.w1 * cx.w0 * v;
        bot[cx.i1 * ch + k] += ry.w1 * cx.w1 * v;
      }
    }
  }
  return grad;
}

CropWindow phi_window(int image_height, int image_width, double crop_fraction) {
  const int w = std::max(1, static_cast<int>(std::lround(crop_fraction * image_width)));
  const int h = std::max(1, static_cast<int>(std::lround(crop_fraction * image_height)));
  return crop_window(image_height, image_width, h, w);
}

Image apply_phi(const Image& image, const TransformParams& params) {
  params.validate();
  const CropWindow win = phi_window(image.height(), image.width(), params.crop_fraction);
  const Image cropped = center_crop(image, win.width, win.height);
  if (cropped.height() == params.output_height && cropped.width() == params.output_width) return cropped;
  return rescale(cropped, params.output_height, params.output_width);
}

Image apply_phi_backward(const Image& grad_output, int input_height, int input_width,
                         const TransformParams& params) {
  params.validate();
  const CropWindow win = phi_window(input_height, input_width, params.crop_fraction);
  const Image grad_crop = (win.height == grad_output.height() && win.width == grad_output.width())
                              ? grad_output
                              : rescale_backward(grad_output, win.height, win.width);
  Image grad(input_height, input_width, grad_output.channels());
  const std::size_t row_len = static_cast<std::size_t>(win.width) * grad_output.channels();
  for (int r = 0; r < win.height; ++r) {
    const double* src = grad_crop.row_ptr(r);
    std::copy(src, src + row_len,
              grad.row_ptr(win.row0 + r) + static_cast<std::size_t>(win.col0) * grad_output.channels());
  }
  return grad;
}

TransformParams sample_transform(Rng& rng, const TransformSchedule& schedule) {
  if (schedule.empty()) throw EmptySchedule("transform schedule has no entries");
  std::vector<double> weights;
  weights.reserve(schedule.size());
  for (const auto& e : schedule) {
    if (!(e.weight >= 0.0)) throw PreconditionError("schedule weights must be non-negative");
    weights.push_back(e.weight);
  }
  const auto& e = schedule[weighted_index(rng, weights)];
  TransformParams p{e.crop_fraction, e.output_height, e.output_width, e.label};
  p.validate();
  return p;
}

}  // namespace uca
