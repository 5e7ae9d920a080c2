#include <doctest.h>

#include "test_support.hpp"
#include "uca/error.hpp"
#include "uca/transforms.hpp"

using namespace uca;

namespace {

Image index_image(int h, int w) {
  Image img(h, w, 1);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) img.at(r, c) = r * 1000 + c;
  return img;
}

bool same(const Image& a, const Image& b, double tol = 0.0) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a.values()[i] - b.values()[i]) > tol) return false;
  return true;
}

}  // namespace

TEST_CASE("crop window follows the centred start rule") {
  const auto w = crop_window(100, 100, 50, 50);
  CHECK(w.row0 == 25);
  CHECK(w.col0 == 25);
  const Image crop = center_crop(index_image(100, 100), 50, 50);
  CHECK(crop.at(0, 0) == 25 * 1000 + 25);
  CHECK(crop.at(49, 49) == 74 * 1000 + 74);

  // Odd difference: floor((101 - 50) / 2) = 25.
  CHECK(crop_window(101, 101, 50, 50).col0 == 25);
  CHECK(crop_window(101, 101, 50, 50).row0 == 25);

  const Image id = index_image(7, 9);
  CHECK(same(center_crop(id, 9, 7), id));

  CHECK_THROWS_AS(crop_window(10, 10, 11, 5), CropTooLarge);
  CHECK_THROWS_AS(crop_window(10, 10, 5, 0), ShapeError);
}

TEST_CASE("rescale conventions") {
  Image flat(5, 7, 3, 0.3);
  const Image up = rescale(flat, 11, 4);
  CHECK(up.height() == 11);
  CHECK(up.width() == 4);
  for (double v : up.values()) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));

  const Image rnd = uca::testing::random_image(9, 6, 2, 4);
  CHECK(same(rescale(rnd, 9, 6), rnd, 1e-6));

  // Align-corners-off on [[0,1],[0,1]] -> 1x2: source columns -0.5 and 1.5
  // clamp to the edges, so the output reproduces the input columns.
  Image two(2, 2, 1);
  two.at(0, 1) = two.at(1, 1) = 1.0;
  const Image half = rescale(two, 1, 2);
  CHECK(half.at(0, 0) == doctest::Approx(0.0));
  CHECK(half.at(0, 1) == doctest::Approx(1.0));

  // Upsampling 1x2 [0, 1] to 1x4 shows the interior weights.
  Image row(1, 2, 1);
  row.at(0, 1) = 1.0;
  const Image quad = rescale(row, 1, 4);
  CHECK(quad.at(0, 0) == doctest::Approx(0.0));
  CHECK(quad.at(0, 1) == doctest::Approx(0.25));
  CHECK(quad.at(0, 2) == doctest::Approx(0.75));
  CHECK(quad.at(0, 3) == doctest::Approx(1.0));

  CHECK_THROWS_AS(rescale(rnd, 0, 3), ShapeError);
  CHECK_THROWS_AS(rescale(Image(), 3, 3), ShapeError);
}

TEST_CASE("rescale_backward is the adjoint of rescale") {
  const Image x = uca::testing::random_image(7, 5, 3, 10);
  const Image g = uca::testing::random_image(12, 9, 3, 11, -1, 1);
  const Image y = rescale(x, 12, 9);
  const Image xt = rescale_backward(g, 7, 5);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y.values()[i] * g.values()[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x.values()[i] * xt.values()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("apply_phi composes crop then rescale") {
  const Image img = uca::testing::random_image(100, 100, 3, 12);
  TransformParams id{1.0, 100, 100, "full"};
  CHECK(same(apply_phi(img, id), img, 1e-12));

  TransformParams half{0.5, 100, 100, "5m"};
  const Image expected = rescale(center_crop(img, 50, 50), 100, 100);
  CHECK(same(apply_phi(img, half), expected));

  // Rescaling first and cropping the rescaled frame gives a different image.
  const Image odd = uca::testing::random_image(37, 53, 3, 15);
  const TransformParams small{0.5, 24, 24, "5m"};
  const Image reversed = rescale(center_crop(rescale(odd, 24, 24), 12, 12), 24, 24);
  CHECK(!same(reversed, apply_phi(odd, small), 1e-6));

  CHECK_THROWS_AS(apply_phi(img, TransformParams{0.0, 10, 10, ""}), PreconditionError);
  CHECK_THROWS_AS(apply_phi(img, TransformParams{1.5, 10, 10, ""}), PreconditionError);
}

TEST_CASE("apply_phi gradient matches finite differences and is zero outside the crop") {
  Image img = uca::testing::random_image(12, 10, 2, 13);
  const TransformParams p{0.5, 7, 9, "x"};
  const Image w = uca::testing::random_image(7, 9, 2, 14, -1, 1);
  auto f = [&] {
    const Image out = apply_phi(img, p);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += w.values()[i] * out.values()[i];
    return s;
  };
  const Image g = apply_phi_backward(w, 12, 10, p);
  const CropWindow win = phi_window(12, 10, 0.5);
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 10; ++c)
      for (int ch = 0; ch < 2; ++ch) {
        const double fd = uca::testing::central_difference(f, img.at(r, c, ch));
        CHECK(uca::testing::rel_error(g.at(r, c, ch), fd) < 1e-4);
        const bool inside = r >= win.row0 && r < win.row0 + win.height && c >= win.col0 && c < win.col0 + win.width;
        if (!inside) CHECK(g.at(r, c, ch) == 0.0);
      }
}

TEST_CASE("sample_transform draws by weight and is deterministic") {
  Rng rng(1);
  const TransformSchedule single{{0.7, 1.0, 32, 32, "only"}};
  for (int i = 0; i < 20; ++i) {
    const auto t = sample_transform(rng, single);
    CHECK(t.crop_fraction == 0.7);
    CHECK(t.scale_label == "only");
  }

  const TransformSchedule two = default_schedule();
  REQUIRE(two.size() == 2);
  CHECK(two[0].crop_fraction == 1.0);
  CHECK(two[1].crop_fraction == 0.5);
  Rng r2(2);
  int full = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) full += sample_transform(r2, two).crop_fraction == 1.0;
  CHECK(std::abs(full / double(n) - 0.5) <= 0.02);

  Rng a(77), b(77);
  for (int i = 0; i < 50; ++i) CHECK(sample_transform(a, two) == sample_transform(b, two));

  CHECK_THROWS_AS(sample_transform(rng, TransformSchedule{}), EmptySchedule);
  CHECK(identity_schedule().size() == 1);
}
