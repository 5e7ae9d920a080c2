#pragma once

// 3D asset model and the two-stage renderer: a fixed geometry pass
// (rasterize_uv, precomputed per view) and a differentiable texel lookup
// (render / render_backward).

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uca/tensor.hpp"

namespace uca {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;

struct Face {
  std::array<int, 3> vertex;
  std::array<int, 3> uv;
};

/// Triangle mesh in model units (meters) with per-corner texture coordinates.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Vec2> uv_coords;
  std::vector<Face> faces;

  /// Throws FormatError on out-of-range indices or uv outside [0,1]^2.
  void validate() const;
};

/// Reads the `v` / `vt` / `f v/vt` subset of Wavefront OBJ. Comments and
/// blank lines are skipped; any other record is a FormatError.
Mesh load_obj(const std::filesystem::path& path);
Mesh parse_obj(std::string_view text);
void save_obj(const Mesh& mesh, const std::filesystem::path& path);

/// Axis-aligned unit cube centered at `center`, one atlas cell per side.
Mesh unit_cube(const Vec3& center = {0.0, 0.0, 0.5});

/// H_t x W_t x 3 texels in [0,1].
class TextureMap {
 public:
  TextureMap() = default;
  TextureMap(int height, int width, double fill = 0.5) : texels_(height, width, 3, fill) {}
  explicit TextureMap(Image texels);

  int height() const noexcept { return texels_.height(); }
  int width() const noexcept { return texels_.width(); }
  const Image& texels() const noexcept { return texels_; }
  Image& texels() noexcept { return texels_; }

  void clamp() noexcept;
  friend bool operator==(const TextureMap&, const TextureMap&) = default;

 private:
  Image texels_;
};

enum class Yaw { North, Northeast, East, Southeast, South, Southwest, West, Northwest };

inline constexpr std::array<Yaw, 8> kAllYaws = {Yaw::North, Yaw::Northeast, Yaw::East, Yaw::Southeast,
                                                Yaw::South, Yaw::Southwest, Yaw::West, Yaw::Northwest};

std::string_view yaw_name(Yaw yaw) noexcept;
std::optional<Yaw> parse_yaw(std::string_view name) noexcept;
/// 45 degrees per compass step, north = 0.
double yaw_degrees(Yaw yaw) noexcept;

struct CameraPose {
  double distance_m = 5.0;
  double pitch_deg = 45.0;
  Yaw yaw = Yaw::North;

  double yaw_deg() const noexcept { return yaw_degrees(yaw); }
  /// Throws PreconditionError unless distance > 0 and pitch in (0, 90).
  void validate() const;
};

/// Pinhole camera looking at `target` from a point `distance_m` away along
/// the pose's pitch/yaw direction.
struct CameraModel {
  double fov_deg = 60.0;
  double near_m = 0.1;
  double far_m = 100.0;
  Vec3 target{0.0, 0.0, 0.8};
};

/// Camera frame derived from a pose; also used to ray-cast backgrounds.
struct CameraFrame {
  Vec3 position;
  Vec3 forward;
  Vec3 right;
  Vec3 up;
  double focal_px;
};
CameraFrame camera_frame(const CameraPose& pose, const CameraModel& camera, int height, int width);

/// One rendered viewpoint. uv_map has 2 channels (u, v) valid under the mask.
struct SceneSample {
  Image background;  // H x W x 3
  Image uv_map;      // H x W x 2
  Mask mask;         // H x W
  CameraPose pose;
  std::string sample_id;

  int height() const noexcept { return background.height(); }
  int width() const noexcept { return background.width(); }
  /// ShapeMismatch on disagreeing sizes, FormatError on uv outside [0,1]^2
  /// under the mask.
  void validate() const;
};

struct UvRaster {
  Image uv_map;
  Mask mask;
};

/// Perspective projection with a nearest-triangle depth test. Throws
/// DegeneratePose when nothing is visible.
UvRaster rasterize_uv(const Mesh& mesh, const CameraPose& pose, int height, int width,
                      const CameraModel& camera = {});

/// Bilinear texel coordinates: u maps to columns [0, W_t-1], v to rows
/// [0, H_t-1] (v = 0 is the first row).
struct TexelFootprint {
  int row0, col0, row1, col1;
  double w00, w01, w10, w11;
};
TexelFootprint texel_footprint(double u, double v, int tex_height, int tex_width) noexcept;

/// Masked pixels take the bilinear texture lookup at uv_map, the rest the
/// background. Throws ShapeMismatch on size disagreement.
Image render(const SceneSample& sample, const TextureMap& texture);

/// Accumulates d(loss)/d(texels) into `grad_texels` (H_t x W_t x 3) given
/// d(loss)/d(rendered image).
void render_backward(const SceneSample& sample, const Image& grad_image, Image& grad_texels);

/// 8-bit RGB PNG. Import throws IoError / FormatError.
void export_texture(const TextureMap& texture, const std::filesystem::path& path);
TextureMap import_texture(const std::filesystem::path& path);

/// Image in [0,1] <-> 8-bit PNG (1 or 3 channels).
void write_image_png(const Image& image, const std::filesystem::path& path);
Image read_image_png(const std::filesystem::path& path);

/// uv_map as 16-bit gray+alpha PNG (u, v); mask as 8-bit gray 0/255.
void write_uv_png(const Image& uv_map, const std::filesystem::path& path);
Image read_uv_png(const std::filesystem::path& path);
void write_mask_png(const Mask& mask, const std::filesystem::path& path);
Mask read_mask_png(const std::filesystem::path& path);

}  // namespace uca
