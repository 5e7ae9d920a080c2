#pragma once

// Synthetic pose-gridded dataset: the toy mesh rasterised over procedural
// ground/sky backgrounds, written as PNG rasters plus a JSONL manifest.

#include <cstdint>
#include <filesystem>

#include "uca/texture.hpp"
#include "uca/view_sampler.hpp"

namespace uca {

struct GridSpec {
  std::vector<double> distances_m{5.0, 10.0};
  std::vector<double> pitches_deg{22.5, 45.0, 67.5};
  std::vector<Yaw> yaws{kAllYaws.begin(), kAllYaws.end()};
  int variants_per_pose = 10;
  int image_height = 224;
  int image_width = 224;
  CameraModel camera{};

  /// ConfigError on empty lists, non-positive values or pitches outside (0, 90).
  void validate() const;
  std::size_t total() const noexcept {
    return distances_m.size() * pitches_deg.size() * yaws.size() * static_cast<std::size_t>(variants_per_pose);
  }
};

struct DatasetReport {
  DatasetManifest manifest;
  std::size_t skipped = 0;  // cells dropped for DegeneratePose
};

/// Sample id for a grid cell, e.g. "d05_p22.5_northeast_v03".
std::string sample_id_for(const CameraPose& pose, int variant);

/// Procedural background for one view: ground plane with asphalt noise,
/// lane paint and scattered clutter decals under a sky gradient. The look
/// is a pure function of `seed`; geometry follows `pose`.
Image procedural_background(const CameraPose& pose, const CameraModel& camera, int height, int width,
                            std::uint64_t seed);

/// Writes out_dir/{backgrounds,uv,masks}/<id>.png and out_dir/manifest.jsonl.
/// Every cell uses a seed derived from (seed, cell index) only.
DatasetReport generate_dataset(const Mesh& mesh, const GridSpec& grid, const std::filesystem::path& out_dir,
                               std::uint64_t seed);

/// render(sample, texture) written as PNG.
void preview(const SceneSample& sample, const TextureMap& texture, const std::filesystem::path& path);

/// Benign paint for the toy car's 4 x 3 atlas: silver with panel seams and a
/// mild vertical sheen.
TextureMap benign_texture(int height, int width);

}  // namespace uca
