#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "uca/random.hpp"
#include "uca/scene_factory.hpp"
#include "uca/tensor.hpp"
#include "uca/texture.hpp"

namespace uca::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "uca") {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (int attempt = 0; attempt < 100; ++attempt) {
      path_ = base / (tag + "-" + std::to_string(rd()) + std::to_string(attempt));
      if (std::filesystem::create_directories(path_)) return;
    }
    throw std::runtime_error("cannot create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path source_dir() { return UCA_SOURCE_DIR; }
inline std::filesystem::path toy_car_path() { return source_dir() / "assets" / "toy_car.obj"; }

inline Image random_image(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Image img(h, w, c);
  for (double& v : img.values()) v = lo + (hi - lo) * uniform01(rng);
  return img;
}

inline Matrix random_matrix(int r, int c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.values()) v = 2.0 * uniform01(rng) - 1.0;
  return m;
}

/// Central difference of f at x[i].
inline double central_difference(const std::function<double()>& f, double& xi, double h = 1e-6) {
  const double saved = xi;
  xi = saved + h;
  const double fp = f();
  xi = saved - h;
  const double fm = f();
  xi = saved;
  return (fp - fm) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor): the relative error used by the gradient
/// checks; `floor` keeps near-zero pairs from blowing up.
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// A small dataset in `dir`: toy car, 5/10 m, the three pitches, 8 yaws.
inline DatasetReport small_dataset(const std::filesystem::path& dir, int variants = 1, int size = 48,
                                   std::uint64_t seed = 7) {
  GridSpec g;
  g.variants_per_pose = variants;
  g.image_height = g.image_width = size;
  return generate_dataset(load_obj(toy_car_path()), g, dir, seed);
}

}  // namespace uca::testing
