#include "uca/scene_factory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "uca/error.hpp"
#include "uca/random.hpp"

namespace uca {

void GridSpec::validate() const {
  if (distances_m.empty() || pitches_deg.empty() || yaws.empty())
    throw ConfigError("grid lists must be nonempty");
  for (double d : distances_m)
    if (!(d > 0.0)) throw ConfigError("grid distances must be positive");
  for (double p : pitches_deg)
    if (!(p > 0.0 && p < 90.0)) throw ConfigError("grid pitches must lie in (0, 90) degrees");
  if (variants_per_pose < 1) throw ConfigError("variants_per_pose must be >= 1");
  if (image_height < 1 || image_width < 1) throw ConfigError("image size must be positive");
}

std::string sample_id_for(const CameraPose& pose, int variant) {
  return fmt::format("d{:02}_p{:g}_{}_v{:02}", static_cast<int>(std::lround(pose.distance_m)), pose.pitch_deg,
                     yaw_name(pose.yaw), variant);
}

namespace {

// Hash-based lattice value noise in [0, 1].
double lattice(std::uint64_t seed, long ix, long iy) {
  const std::uint64_t h = mix_seed(seed ^ mix_seed(static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ULL +
                                                   static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<long>(fx), iy = static_cast<long>(fy);
  double tx = x - fx, ty = y - fy;
  tx = tx * tx * (3.0 - 2.0 * tx);
  ty = ty * ty * (3.0 - 2.0 * ty);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

double fbm(std::uint64_t seed, double x, double y) {
  double s = 0.0, amp = 0.5, f = 1.0;
  for (int o = 0; o < 4; ++o) {
    s += amp * value_noise(seed + static_cast<std::uint64_t>(o), x * f, y * f);
    amp *= 0.5;
    f *= 2.0;
  }
  return s / 0.9375;
}

struct Rgb {
  double r, g, b;
};

Rgb hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

struct Decal {
  double x, y, hx, hy;
  Rgb color;
};

struct SceneLook {
  Rgb ground;
  double ground_noise;
  Rgb sky_low, sky_high;
  double lane_offset;
  std::vector<Decal> decals;
  std::uint64_t noise_seed;
};

SceneLook draw_look(std::uint64_t seed) {
  Rng rng(seed);
  SceneLook L;
  const double hue = uniform01(rng);
  const double val = 0.30 + 0.25 * uniform01(rng);
  L.ground = hsv(hue, 0.05 + 0.2 * uniform01(rng), val);
  L.ground_noise = 0.08 + 0.1 * uniform01(rng);
  const double sky_hue = 0.52 + 0.12 * uniform01(rng);
  L.sky_high = hsv(sky_hue, 0.35 + 0.3 * uniform01(rng), 0.65 + 0.3 * uniform01(rng));
  L.sky_low = hsv(sky_hue + 0.05 * uniform01(rng), 0.1, 0.85 + 0.1 * uniform01(rng));
  L.lane_offset = 2.5 + 1.5 * uniform01(rng);
  const int n = 6 + static_cast<int>(uniform_index(rng, 10));
  for (int i = 0; i < n; ++i) {
    Decal d;
    // keep clutter off the car footprint
    do {
      d.x = -25.0 + 50.0 * uniform01(rng);
      d.y = -25.0 + 50.0 * uniform01(rng);
    } while (std::abs(d.x) < 3.5 && std::abs(d.y) < 2.0);
    d.hx = 0.3 + 1.7 * uniform01(rng);
    d.hy = 0.3 + 1.7 * uniform01(rng);
    d.color = hsv(uniform01(rng), 0.3 + 0.6 * uniform01(rng), 0.3 + 0.6 * uniform01(rng));
    L.decals.push_back(d);
  }
  L.noise_seed = rng();
  return L;
}

Rgb shade_ground(const SceneLook& L, double x, double y) {
  const double n = fbm(L.noise_seed, x * 0.8, y * 0.8) - 0.5;
  Rgb c{L.ground.r + L.ground_noise * n, L.ground.g + L.ground_noise * n, L.ground.b + L.ground_noise * n};
  // Dashed lane paint parallel to x on both sides of the car.
  for (double side : {-1.0, 1.0}) {
    if (std::abs(y - side * L.lane_offset) < 0.08 && std::fmod(std::abs(x) + 100.0, 6.0) < 3.0) c = {0.9, 0.9, 0.85};
  }
  for (const auto& d : L.decals)
    if (std::abs(x - d.x) < d.hx && std::abs(y - d.y) < d.hy) c = d.color;
  return c;
}

}  // namespace

Image procedural_background(const CameraPose& pose, const CameraModel& camera, int height, int width,
                            std::uint64_t seed) {
  const SceneLook L = draw_look(seed);
  const CameraFrame f = camera_frame(pose, camera, height, width);
  Image img(height, width, 3);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double sx = (c + 0.5 - 0.5 * width) / f.focal_px;
      const double sy = (0.5 * height - (r + 0.5)) / f.focal_px;
      Vec3 d{f.forward[0] + sx * f.right[0] + sy * f.up[0], f.forward[1] + sx * f.right[1] + sy * f.up[1],
             f.forward[2] + sx * f.right[2] + sy * f.up[2]};
      const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      for (double& v : d) v /= len;
      Rgb col;
      const double t = d[2] < -1e-6 ? -f.position[2] / d[2] : -1.0;
      const double elev = std::clamp(d[2], 0.0, 1.0);
      const Rgb sky{L.sky_low.r + (L.sky_high.r - L.sky_low.r) * std::sqrt(elev),
                    L.sky_low.g + (L.sky_high.g - L.sky_low.g) * std::sqrt(elev),
                    L.sky_low.b + (L.sky_high.b - L.sky_low.b) * std::sqrt(elev)};
      if (t > 0.0) {
        col = shade_ground(L, f.position[0] + t * d[0], f.position[1] + t * d[1]);
        // distance haze toward the horizon colour
        const double fog = std::clamp((t - 30.0) / 120.0, 0.0, 1.0);
        col = {col.r + (L.sky_low.r - col.r) * fog, col.g + (L.sky_low.g - col.g) * fog,
               col.b + (L.sky_low.b - col.b) * fog};
      } else {
        col = sky;
      }
      img.at(r, c, 0) = std::clamp(col.r, 0.0, 1.0);
      img.at(r, c, 1) = std::clamp(col.g, 0.0, 1.0);
      img.at(r, c, 2) = std::clamp(col.b, 0.0, 1.0);
    }
  }
  return img;
}

DatasetReport generate_dataset(const Mesh& mesh, const GridSpec& grid, const std::filesystem::path& out_dir,
                               std::uint64_t seed) {
  grid.validate();
  mesh.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"backgrounds", "uv", "masks"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }

  DatasetReport report;
  auto& m = report.manifest;
  m.root = fs::absolute(out_dir);
  m.pose_grid.distances_m = grid.distances_m;
  m.pose_grid.pitches_deg = grid.pitches_deg;
  m.pose_grid.yaws = grid.yaws;

  const std::uint64_t per_distance = grid.total() / grid.distances_m.size();
  std::uint64_t cell = 0;
  for (double dist : grid.distances_m) {
    for (double pitch : grid.pitches_deg) {
      for (Yaw yaw : grid.yaws) {
        for (int v = 0; v < grid.variants_per_pose; ++v, ++cell) {
          const CameraPose pose{dist, pitch, yaw};
          const std::string id = sample_id_for(pose, v);
          // The look ignores distance so the 5 m / 10 m pair of a cell share a scene.
          const std::uint64_t look_seed =
              mix_seed(seed ^ mix_seed((cell % per_distance) * 0x100000001b3ULL + 1));
          UvRaster uv;
          try {
            uv = rasterize_uv(mesh, pose, grid.image_height, grid.image_width, grid.camera);
          } catch (const DegeneratePose& e) {
            spdlog::warn("skipping {}: {}", id, e.what());
            ++report.skipped;
            continue;
          }
          SceneSample s;
          s.background = procedural_background(pose, grid.camera, grid.image_height, grid.image_width, look_seed);
          s.uv_map = std::move(uv.uv_map);
          s.mask = std::move(uv.mask);
          s.pose = pose;
          s.sample_id = id;
          s.validate();
          ManifestEntry e;
          e.sample_id = id;
          e.background_path = m.root / "backgrounds" / (id + ".png");
          e.uv_map_path = m.root / "uv" / (id + ".png");
          e.mask_path = m.root / "masks" / (id + ".png");
          e.pose = pose;
          write_image_png(s.background, e.background_path);
          write_uv_png(s.uv_map, e.uv_map_path);
          write_mask_png(s.mask, e.mask_path);
          m.entries.push_back(std::move(e));
        }
      }
    }
  }
  save_manifest(m, out_dir / "manifest.jsonl");
  if (report.skipped) spdlog::warn("{} of {} cells skipped", report.skipped, grid.total());
  return report;
}

void preview(const SceneSample& sample, const TextureMap& texture, const std::filesystem::path& path) {
  write_image_png(render(sample, texture), path);
}

TextureMap benign_texture(int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("texture size must be positive");
  TextureMap t(height, width);
  Image& im = t.texels();
  const Rgb paint{0.51, 0.52, 0.55};
  for (int r = 0; r < height; ++r) {
    const double v = (r + 0.5) / height;
    const double cell_v = v * 3.0 - std::floor(v * 3.0);
    for (int c = 0; c < width; ++c) {
      const double u = (c + 0.5) / width;
      const double cell_u = u * 4.0 - std::floor(u * 4.0);
      // sheen brightest near the top of each panel
      double k = 1.0 + 0.08 * (0.5 - cell_v);
      const double edge = std::min({cell_u, 1.0 - cell_u, cell_v, 1.0 - cell_v});
      if (edge < 0.035) k *= 0.85;
      else if (edge < 0.06) k *= 0.9;
      im.at(r, c, 0) = std::clamp(paint.r * k, 0.0, 1.0);
      im.at(r, c, 1) = std::clamp(paint.g * k, 0.0, 1.0);
      im.at(r, c, 2) = std::clamp(paint.b * k, 0.0, 1.0);
    }
  }
  return t;
}

}  // namespace uca
