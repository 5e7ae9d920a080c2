#include <doctest.h>

#include <fstream>
#include <set>

#include "test_support.hpp"
#include "uca/error.hpp"
#include "uca/png_io.hpp"
#include "uca/texture.hpp"

using namespace uca;
using uca::testing::TempDir;

namespace {

// 6 x 6 sample whose masked pixels all look up the left half of a 4 x 8
// texture; the right half is never referenced.
SceneSample left_half_sample() {
  SceneSample s;
  s.background = uca::testing::random_image(6, 6, 3, 5);
  s.uv_map = Image(6, 6, 2);
  s.mask = Mask(6, 6);
  Rng rng(9);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) {
      if ((r + c) % 3 == 0) continue;
      s.mask.set(r, c, true);
      s.uv_map.at(r, c, 0) = 0.4 * uniform01(rng);  // columns 0..2.8 of 8
      s.uv_map.at(r, c, 1) = uniform01(rng);
    }
  s.sample_id = "fixture";
  return s;
}

}  // namespace

TEST_CASE("OBJ parsing accepts the v/vt/f subset and rejects the rest") {
  const Mesh m = parse_obj("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n");
  CHECK(m.vertices.size() == 3);
  CHECK(m.faces.size() == 1);
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nvn 0 0 1\n"), FormatError);
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nvt 0 0\nf 1/1 2/1 3/1\n"), FormatError);
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 1.5\nf 1/1 2/1 3/1\n"), FormatError);
}

TEST_CASE("shipped toy car is a valid mesh and round-trips through OBJ") {
  const Mesh m = load_obj(uca::testing::toy_car_path());
  CHECK(m.faces.size() >= 12);
  TempDir dir;
  save_obj(m, dir / "car.obj");
  const Mesh back = load_obj(dir / "car.obj");
  CHECK(back.faces.size() == m.faces.size());
  CHECK(back.vertices.size() == m.vertices.size());
}

TEST_CASE("camera pose invariants and yaw labels") {
  CHECK(yaw_degrees(Yaw::North) == 0.0);
  CHECK(yaw_degrees(Yaw::Northwest) == 315.0);
  CHECK(parse_yaw("southeast") == Yaw::Southeast);
  CHECK(!parse_yaw("up").has_value());
  CHECK_THROWS_AS((CameraPose{5.0, 90.0, Yaw::North}.validate()), PreconditionError);
  CHECK_THROWS_AS((CameraPose{0.0, 45.0, Yaw::North}.validate()), PreconditionError);
  CHECK_NOTHROW((CameraPose{5.0, 45.0, Yaw::East}.validate()));
}

TEST_CASE("rasterize_uv: centred unit cube is visible with uv in range") {
  const UvRaster r = rasterize_uv(unit_cube(), CameraPose{3.0, 45.0, Yaw::North}, 64, 64);
  CHECK(r.mask.count() > 0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (r.mask.at(y, x)) {
        CHECK(r.uv_map.at(y, x, 0) >= 0.0);
        CHECK(r.uv_map.at(y, x, 0) <= 1.0);
        CHECK(r.uv_map.at(y, x, 1) >= 0.0);
        CHECK(r.uv_map.at(y, x, 1) <= 1.0);
      }
}

TEST_CASE("rasterize_uv: mesh beyond the far plane is a degenerate pose") {
  CHECK_THROWS_AS(rasterize_uv(unit_cube(), CameraPose{500.0, 45.0, Yaw::North}, 32, 32), DegeneratePose);
}

TEST_CASE("rasterize_uv: toy car covers more pixels at 5 m than at 10 m") {
  const Mesh car = load_obj(uca::testing::toy_car_path());
  for (double pitch : {22.5, 45.0, 67.5})
    for (Yaw y : {Yaw::North, Yaw::East, Yaw::Southwest}) {
      const auto near = rasterize_uv(car, CameraPose{5.0, pitch, y}, 96, 96).mask.count();
      const auto far = rasterize_uv(car, CameraPose{10.0, pitch, y}, 96, 96).mask.count();
      CHECK(near > far);
    }
}

TEST_CASE("render: constant texture, empty mask and background independence") {
  const Mesh car = load_obj(uca::testing::toy_car_path());
  const auto uv = rasterize_uv(car, CameraPose{5.0, 45.0, Yaw::North}, 40, 40);
  SceneSample s{uca::testing::random_image(40, 40, 3, 3), uv.uv_map, uv.mask, {}, "s"};
  const Image out = render(s, TextureMap(16, 16, 0.5));
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c) {
        if (s.mask.at(y, x)) CHECK(out.at(y, x, c) == doctest::Approx(0.5).epsilon(1e-14));
        else CHECK(out.at(y, x, c) == s.background.at(y, x, c));
      }

  SceneSample empty = s;
  empty.mask = Mask(40, 40);
  const Image bg = render(empty, TextureMap(16, 16, 0.9));
  CHECK(std::equal(bg.values().begin(), bg.values().end(), s.background.values().begin()));

  // Masked pixels ignore the background; rendering is pure.
  const TextureMap tex(uca::testing::random_image(16, 16, 3, 4));
  SceneSample other = s;
  other.background = uca::testing::random_image(40, 40, 3, 99);
  const Image a = render(s, tex), b = render(other, tex), a2 = render(s, tex);
  CHECK(std::equal(a.values().begin(), a.values().end(), a2.values().begin()));
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      if (s.mask.at(y, x))
        for (int c = 0; c < 3; ++c) CHECK(a.at(y, x, c) == b.at(y, x, c));
}

TEST_CASE("render: shape mismatches are rejected") {
  SceneSample s = left_half_sample();
  s.background = Image(5, 6, 3);
  CHECK_THROWS_AS(render(s, TextureMap(4, 8)), ShapeMismatch);
}

TEST_CASE("render_backward matches finite differences and leaves unreferenced texels at zero") {
  const SceneSample s = left_half_sample();
  TextureMap tex(uca::testing::random_image(4, 8, 3, 21));
  const Image weights = uca::testing::random_image(6, 6, 3, 22, -1.0, 1.0);
  auto objective = [&] {
    const Image out = render(s, tex);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += weights.values()[i] * out.values()[i];
    return acc;
  };
  Image grad(4, 8, 3);
  render_backward(s, weights, grad);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 8; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const double fd = uca::testing::central_difference(objective, tex.texels().at(r, c, ch));
        CHECK(uca::testing::rel_error(grad.at(r, c, ch), fd) < 1e-4);
        if (c >= 4) CHECK(grad.at(r, c, ch) == 0.0);
      }
}

TEST_CASE("texture export/import round trip is within 8-bit quantisation") {
  TempDir dir;
  const TextureMap tex(uca::testing::random_image(13, 17, 3, 8));
  export_texture(tex, dir / "t.png");
  const TextureMap back = import_texture(dir / "t.png");
  REQUIRE(back.height() == 13);
  REQUIRE(back.width() == 17);
  double worst = 0.0;
  for (std::size_t i = 0; i < tex.texels().size(); ++i)
    worst = std::max(worst, std::abs(tex.texels().values()[i] - back.texels().values()[i]));
  CHECK(worst <= 1.0 / 510.0 + 1e-12);

  export_texture(TextureMap(4, 4, 0.0), dir / "black.png");
  const auto raster = png::read(dir / "black.png");
  for (auto v : raster.samples) CHECK(v == 0);

  std::ofstream(dir / "empty.png").close();
  CHECK_THROWS_AS(import_texture(dir / "empty.png"), FormatError);
  CHECK_THROWS_AS(import_texture(dir / "missing.png"), IoError);
}

TEST_CASE("uv and mask rasters round trip") {
  TempDir dir;
  const SceneSample s = left_half_sample();
  write_uv_png(s.uv_map, dir / "uv.png");
  write_mask_png(s.mask, dir / "m.png");
  const Image uv = read_uv_png(dir / "uv.png");
  const Mask m = read_mask_png(dir / "m.png");
  for (std::size_t i = 0; i < uv.size(); ++i) CHECK(std::abs(uv.values()[i] - s.uv_map.values()[i]) <= 1.0 / 131070 + 1e-12);
  CHECK(std::equal(m.values().begin(), m.values().end(), s.mask.values().begin()));
}

TEST_CASE("texel footprint weights sum to one") {
  for (double u : {0.0, 0.13, 0.5, 1.0})
    for (double v : {0.0, 0.77, 1.0}) {
      const auto f = texel_footprint(u, v, 5, 9);
      CHECK(f.w00 + f.w01 + f.w10 + f.w11 == doctest::Approx(1.0));
      CHECK(f.row1 < 5);
      CHECK(f.col1 < 9);
    }
}
