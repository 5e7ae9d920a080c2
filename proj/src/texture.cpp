#include "uca/texture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "uca/error.hpp"
#include "uca/png_io.hpp"

namespace uca {
namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 normalized(const Vec3& a) {
  const double n = std::sqrt(dot3(a, a));
  return {a[0] / n, a[1] / n, a[2] / n};
}

std::string line_error(int line_no, const std::string& msg) {
  return "line " + std::to_string(line_no) + ": " + msg;
}

std::uint16_t quantize(double x, double scale) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(x, 0.0, 1.0) * scale));
}

}  // namespace

// ---------------------------------------------------------------------------
// Mesh

void Mesh::validate() const {
  const auto nv = static_cast<int>(vertices.size());
  const auto nt = static_cast<int>(uv_coords.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      if (faces[f].vertex[k] < 0 || faces[f].vertex[k] >= nv || faces[f].uv[k] < 0 || faces[f].uv[k] >= nt)
        throw FormatError("face " + std::to_string(f) + " references a missing vertex or uv");
    }
  }
  for (const auto& uv : uv_coords) {
    if (!(uv[0] >= 0.0 && uv[0] <= 1.0 && uv[1] >= 0.0 && uv[1] <= 1.0))
      throw FormatError("uv coordinate outside [0,1]^2");
  }
}

Mesh parse_obj(std::string_view text) {
  Mesh mesh;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p{};
      if (!(ls >> p[0] >> p[1] >> p[2])) throw FormatError(line_error(line_no, "bad vertex"));
      mesh.vertices.push_back(p);
    } else if (tag == "vt") {
      Vec2 t{};
      if (!(ls >> t[0] >> t[1])) throw FormatError(line_error(line_no, "bad texture coordinate"));
      mesh.uv_coords.push_back(t);
    } else if (tag == "f") {
      std::vector<std::array<int, 2>> corners;
      std::string tok;
      while (ls >> tok) {
        const auto slash = tok.find('/');
        if (slash == std::string::npos || tok.find('/', slash + 1) != std::string::npos)
          throw FormatError(line_error(line_no, "face corners must be v/vt"));
        try {
          std::size_t used_v = 0, used_t = 0;
          const std::string vs = tok.substr(0, slash), ts = tok.substr(slash + 1);
          const int v = std::stoi(vs, &used_v);
          const int t = std::stoi(ts, &used_t);
          if (used_v != vs.size() || used_t != ts.size() || v < 1 || t < 1) throw std::invalid_argument(tok);
          corners.push_back({v - 1, t - 1});
        } catch (const std::logic_error&) {
          throw FormatError(line_error(line_no, "bad face index '" + tok + "'"));
        }
      }
      if (corners.size() < 3) throw FormatError(line_error(line_no, "face needs 3 corners"));
      for (std::size_t k = 1; k + 1 < corners.size(); ++k) {
        mesh.faces.push_back(Face{{corners[0][0], corners[k][0], corners[k + 1][0]},
                                  {corners[0][1], corners[k][1], corners[k + 1][1]}});
      }
    } else {
      throw FormatError(line_error(line_no, "unsupported record '" + tag + "'"));
    }
  }
  mesh.validate();
  return mesh;
}

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_obj(buf.str());
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path.string());
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  for (const auto& t : mesh.uv_coords) out << "vt " << t[0] << ' ' << t[1] << '\n';
  for (const auto& f : mesh.faces) {
    out << 'f';
    for (int k = 0; k < 3; ++k) out << ' ' << f.vertex[k] + 1 << '/' << f.uv[k] + 1;
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Mesh unit_cube(const Vec3& center) {
  Mesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.push_back({center[0] + ((i & 1) ? 0.5 : -0.5), center[1] + ((i & 2) ? 0.5 : -0.5),
                          center[2] + ((i & 4) ? 0.5 : -0.5)});
  }
  // Quads as corner lists (outward winding is irrelevant with a depth test).
  const int quads[6][4] = {{0, 1, 3, 2}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 3, 7, 5}};
  for (int q = 0; q < 6; ++q) {
    const double u0 = (q % 3) / 3.0 + 0.01, u1 = (q % 3 + 1) / 3.0 - 0.01;
    const double v0 = (q / 3) / 2.0 + 0.01, v1 = (q / 3 + 1) / 2.0 - 0.01;
    const int base = static_cast<int>(m.uv_coords.size());
    m.uv_coords.insert(m.uv_coords.end(), {{u0, v0}, {u1, v0}, {u1, v1}, {u0, v1}});
    m.faces.push_back(Face{{quads[q][0], quads[q][1], quads[q][2]}, {base, base + 1, base + 2}});
    m.faces.push_back(Face{{quads[q][0], quads[q][2], quads[q][3]}, {base, base + 2, base + 3}});
  }
  return m;
}

// ---------------------------------------------------------------------------
// Texture and poses

TextureMap::TextureMap(Image texels) : texels_(std::move(texels)) {
  if (texels_.channels() != 3 || texels_.height() <= 0 || texels_.width() <= 0)
    throw ShapeError("texture must be a nonempty H x W x 3 image");
}

void TextureMap::clamp() noexcept {
  for (double& t : texels_.values()) t = std::clamp(t, 0.0, 1.0);
}

std::string_view yaw_name(Yaw yaw) noexcept {
  static constexpr std::array<std::string_view, 8> names = {
      "north", "northeast", "east", "southeast", "south", "southwest", "west", "northwest"};
  return names[static_cast<std::size_t>(yaw)];
}

std::optional<Yaw> parse_yaw(std::string_view name) noexcept {
  for (Yaw y : kAllYaws)
    if (yaw_name(y) == name) return y;
  return std::nullopt;
}

double yaw_degrees(Yaw yaw) noexcept { return 45.0 * static_cast<int>(yaw); }

void CameraPose::validate() const {
  if (!(distance_m > 0.0)) throw PreconditionError("camera distance must be positive");
  if (!(pitch_deg > 0.0 && pitch_deg < 90.0)) throw PreconditionError("camera pitch must lie in (0, 90) degrees");
}

CameraFrame camera_frame(const CameraPose& pose, const CameraModel& camera, int height, int width) {
  (void)height;
  constexpr double deg = std::numbers::pi / 180.0;
  const double p = pose.pitch_deg * deg, y = pose.yaw_deg() * deg;
  const Vec3 offset{std::cos(p) * std::cos(y), std::cos(p) * std::sin(y), std::sin(p)};
  CameraFrame f;
  f.position = {camera.target[0] + pose.distance_m * offset[0], camera.target[1] + pose.distance_m * offset[1],
                camera.target[2] + pose.distance_m * offset[2]};
  f.forward = normalized(sub(camera.target, f.position));
  f.right = normalized(cross(f.forward, Vec3{0.0, 0.0, 1.0}));
  f.up = cross(f.right, f.forward);
  f.focal_px = 0.5 * width / std::tan(0.5 * camera.fov_deg * deg);
  return f;
}

// ---------------------------------------------------------------------------
// Geometry pass

void SceneSample::validate() const {
  const int h = background.height(), w = background.width();
  if (background.channels() != 3 || uv_map.channels() != 2 || uv_map.height() != h || uv_map.width() != w ||
      mask.height() != h || mask.width() != w)
    throw ShapeMismatch("sample '" + sample_id + "': background, uv_map and mask disagree in size");
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      const double u = uv_map.at(r, c, 0), v = uv_map.at(r, c, 1);
      if (!(u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0))
        throw FormatError("sample '" + sample_id + "': uv outside [0,1]^2 under the mask");
    }
  }
}

UvRaster rasterize_uv(const Mesh& mesh, const CameraPose& pose, int height, int width, const CameraModel& camera) {
  if (height <= 0 || width <= 0) throw ShapeError("image size must be positive");
  pose.validate();
  mesh.validate();
  const CameraFrame cam = camera_frame(pose, camera, height, width);

  struct Projected {
    double x, y, z;
  };
  std::vector<Projected> proj(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3 rel = sub(mesh.vertices[i], cam.position);
    const double z = dot3(rel, cam.forward);
    const double zs = z > 1e-12 ? z : 1e-12;
    proj[i] = {0.5 * width + cam.focal_px * dot3(rel, cam.right) / zs,
               0.5 * height - cam.focal_px * dot3(rel, cam.up) / zs, z};
  }

  UvRaster out{Image(height, width, 2, 0.0), Mask(height, width, 0)};
  std::vector<double> depth(static_cast<std::size_t>(height) * width, std::numeric_limits<double>::infinity());

  for (const Face& face : mesh.faces) {
    const Projected& a = proj[face.vertex[0]];
    const Projected& b = proj[face.vertex[1]];
    const Projected& c = proj[face.vertex[2]];
    // Triangles crossing the near plane are dropped whole.
    if (a.z < camera.near_m || b.z < camera.near_m || c.z < camera.near_m) continue;
    const double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    if (std::abs(area) < 1e-12) continue;

    const int c0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
    const Vec2& ta = mesh.uv_coords[face.uv[0]];
    const Vec2& tb = mesh.uv_coords[face.uv[1]];
    const Vec2& tc = mesh.uv_coords[face.uv[2]];

    for (int r = r0; r <= r1; ++r) {
      const double py = r + 0.5;
      for (int col = c0; col <= c1; ++col) {
        const double px = col + 0.5;
        const double wa = ((b.x - px) * (c.y - py) - (b.y - py) * (c.x - px)) / area;
        const double wb = ((c.x - px) * (a.y - py) - (c.y - py) * (a.x - px)) / area;
        const double wc = 1.0 - wa - wb;
        if (wa < 0.0 || wb < 0.0 || wc < 0.0) continue;
        // Perspective-correct interpolation through 1/z.
        const double ia = wa / a.z, ib = wb / b.z, ic = wc / c.z;
        const double inv = ia + ib + ic;
        const double z = 1.0 / inv;
        if (z < camera.near_m || z > camera.far_m) continue;
        const std::size_t idx = static_cast<std::size_t>(r) * width + col;
        if (z >= depth[idx]) continue;
        depth[idx] = z;
        out.uv_map.at(r, col, 0) = std::clamp((ia * ta[0] + ib * tb[0] + ic * tc[0]) * z, 0.0, 1.0);
        out.uv_map.at(r, col, 1) = std::clamp((ia * ta[1] + ib * tb[1] + ic * tc[1]) * z, 0.0, 1.0);
        out.mask.set(r, col, true);
      }
    }
  }
  if (out.mask.count() == 0)
    throw DegeneratePose("mesh projects to zero visible pixels at distance " + std::to_string(pose.distance_m));
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable texel lookup

TexelFootprint texel_footprint(double u, double v, int tex_height, int tex_width) noexcept {
  const auto axis = [](double t, int n, int& i0, int& i1, double& frac) {
    if (n == 1) {
      i0 = i1 = 0;
      frac = 0.0;
      return;
    }
    const double x = std::clamp(t, 0.0, 1.0) * (n - 1);
    i0 = std::min(static_cast<int>(x), n - 2);
    i1 = i0 + 1;
    frac = x - i0;
  };
  TexelFootprint f{};
  double fx = 0.0, fy = 0.0;
  axis(u, tex_width, f.col0, f.col1, fx);
  axis(v, tex_height, f.row0, f.row1, fy);
  f.w00 = (1.0 - fy) * (1.0 - fx);
  f.w01 = (1.0 - fy) * fx;
  f.w10 = fy * (1.0 - fx);
  f.w11 = fy * fx;
  return f;
}

Image render(const SceneSample& sample, const TextureMap& texture) {
  const int h = sample.background.height(), w = sample.background.width();
  if (sample.background.channels() != 3 || sample.uv_map.height() != h || sample.uv_map.width() != w ||
      sample.uv_map.channels() != 2 || sample.mask.height() != h || sample.mask.width() != w)
    throw ShapeMismatch("uv_map/mask/background disagree in spatial size");
  const Image& tex = texture.texels();
  Image out = sample.background;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!sample.mask.at(r, c)) continue;
      const TexelFootprint f = texel_footprint(sample.uv_map.at(r, c, 0), sample.uv_map.at(r, c, 1), tex.height(),
                                               tex.width());
      for (int ch = 0; ch < 3; ++ch) {
        out.at(r, c, ch) = f.w00 * tex.at(f.row0, f.col0, ch) + f.w01 * tex.at(f.row0, f.col1, ch) +
                           f.w10 * tex.at(f.row1, f.col0, ch) + f.w11 * tex.at(f.row1, f.col1, ch);
      }
    }
  }
  return out;
}

void render_backward(const SceneSample& sample, const Image& grad_image, Image& grad_texels) {
  const int h = sample.background.height(), w = sample.background.width();
  if (grad_image.height() != h || grad_image.width() != w || grad_image.channels() != 3 ||
      grad_texels.channels() != 3 || sample.mask.height() != h || sample.mask.width() != w)
    throw ShapeMismatch("render_backward: gradient shapes disagree with the sample");
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!sample.mask.at(r, c)) continue;
      const TexelFootprint f = texel_footprint(sample.uv_map.at(r, c, 0), sample.uv_map.at(r, c, 1),
                                               grad_texels.height(), grad_texels.width());
      for (int ch = 0; ch < 3; ++ch) {
        const double g = grad_image.at(r, c, ch);
        if (g == 0.0) continue;
        grad_texels.at(f.row0, f.col0, ch) += f.w00 * g;
        grad_texels.at(f.row0, f.col1, ch) += f.w01 * g;
        grad_texels.at(f.row1, f.col0, ch) += f.w10 * g;
        grad_texels.at(f.row1, f.col1, ch) += f.w11 * g;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Persistence

void write_image_png(const Image& image, const std::filesystem::path& path) {
  if (image.channels() != 1 && image.channels() != 3) throw ShapeError("PNG export needs 1 or 3 channels");
  png::Raster r{image.width(), image.height(), image.channels(), 8, {}};
  r.samples.resize(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) r.samples[i] = quantize(image.data()[i], 255.0);
  png::write(path, r);
}

Image read_image_png(const std::filesystem::path& path) {
  const png::Raster r = png::read(path);
  const double scale = r.bit_depth == 16 ? 65535.0 : 255.0;
  int channels = r.channels;
  if (channels == 2 || channels == 4) --channels;  // drop alpha
  Image out(r.height, r.width, channels);
  for (int i = 0; i < r.height * r.width; ++i)
    for (int ch = 0; ch < channels; ++ch)
      out.data()[static_cast<std::size_t>(i) * channels + ch] =
          r.samples[static_cast<std::size_t>(i) * r.channels + ch] / scale;
  return out;
}

void export_texture(const TextureMap& texture, const std::filesystem::path& path) {
  write_image_png(texture.texels(), path);
}

TextureMap import_texture(const std::filesystem::path& path) {
  if (std::filesystem::exists(path) && std::filesystem::file_size(path) == 0)
    throw FormatError(path.string() + " is empty");
  Image img = read_image_png(path);
  if (img.channels() != 3) throw FormatError(path.string() + " is not an RGB texture");
  return TextureMap(std::move(img));
}

void write_uv_png(const Image& uv_map, const std::filesystem::path& path) {
  if (uv_map.channels() != 2) throw ShapeError("uv map must have 2 channels");
  png::Raster r{uv_map.width(), uv_map.height(), 2, 16, {}};
  r.samples.resize(uv_map.size());
  for (std::size_t i = 0; i < uv_map.size(); ++i) r.samples[i] = quantize(uv_map.data()[i], 65535.0);
  png::write(path, r);
}

Image read_uv_png(const std::filesystem::path& path) {
  const png::Raster r = png::read(path);
  if (r.channels != 2 || r.bit_depth != 16) throw FormatError(path.string() + " is not a 16-bit uv raster");
  Image out(r.height, r.width, 2);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = r.samples[i] / 65535.0;
  return out;
}

void write_mask_png(const Mask& mask, const std::filesystem::path& path) {
  png::Raster r{mask.width(), mask.height(), 1, 8, {}};
  r.samples.resize(mask.values().size());
  for (std::size_t i = 0; i < r.samples.size(); ++i) r.samples[i] = mask.values()[i] ? 255 : 0;
  png::write(path, r);
}

Mask read_mask_png(const std::filesystem::path& path) {
  const png::Raster r = png::read(path);
  if (r.channels != 1) throw FormatError(path.string() + " is not a single-channel mask");
  Mask m(r.height, r.width);
  const std::uint16_t half = r.bit_depth == 16 ? 32768 : 128;
  for (int row = 0; row < r.height; ++row)
    for (int col = 0; col < r.width; ++col)
      m.set(row, col, r.samples[static_cast<std::size_t>(row) * r.width + col] >= half);
  return m;
}

}  // namespace uca
