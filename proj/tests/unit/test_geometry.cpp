#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "reefloop/geometry.hpp"

using namespace reefloop;

TEST_CASE("iou of identical, disjoint and half-shifted boxes") {
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(iou({0, 0, 10, 10}, {20, 20, 10, 10}) == 0.0);

  // Expected value frozen from the rasterization oracle.
  const double oracle = testing::raster_iou({0, 0, 10, 10}, {5, 0, 10, 10});
  CHECK(oracle == doctest::Approx(50.0 / 150.0).epsilon(1e-15));
  CHECK(iou({0, 0, 10, 10}, {5, 0, 10, 10}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("iou with an empty box is zero") {
  CHECK(iou(BBox::empty(), {0, 0, 10, 10}) == 0.0);
  CHECK(iou({0, 0, 10, 10}, BBox::empty()) == 0.0);
  CHECK(iou(BBox::empty(), BBox::empty()) == 0.0);
  CHECK(iou({0, 0, 10, 10}, {10, 0, 10, 10}) == 0.0);  // touching edges
}

TEST_CASE("center error") {
  // centers (100,100) and (103,104)
  CHECK(center_error({95, 95, 10, 10}, {98, 99, 10, 10}) == doctest::Approx(5.0));
  CHECK(center_error({1, 2, 3, 4}, {1, 2, 3, 4}) == 0.0);
  CHECK(std::isinf(center_error(BBox::empty(), {0, 0, 5, 5})));
}

TEST_CASE("normalized center error") {
  const BBox gt{0, 0, 50, 25};
  const BBox pred = translated(gt, 5, 5);
  CHECK(normalized_center_error(pred, gt) == doctest::Approx(std::sqrt(0.01 + 0.04)));
  CHECK(normalized_center_error(pred, gt) == doctest::Approx(0.2236).epsilon(1e-4));
  CHECK(normalized_center_error(gt, gt) == 0.0);
  CHECK(std::isinf(normalized_center_error(BBox::empty(), gt)));

  const BBox big{0, 0, 100, 50};
  CHECK(normalized_center_error(translated(big, 5, 5), big) ==
        doctest::Approx(0.5 * normalized_center_error(pred, gt)));
}

TEST_CASE("iou properties over random boxes") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const BBox a = testing::random_box(rng);
    const BBox b = testing::random_box(rng);
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, a) == 1.0);
    const double v = iou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);

    const double du = rng() % 1000 - 500.0;
    const double dv = rng() % 1000 - 500.0;
    CHECK(iou(translated(a, du, dv), translated(b, du, dv)) == doctest::Approx(v).epsilon(1e-9));
    CHECK(center_error(translated(a, du, dv), translated(b, du, dv)) ==
          doctest::Approx(center_error(a, b)).epsilon(1e-9));

    const double s = 0.25 + (rng() % 100) / 25.0;
    CHECK(iou(scaled(a, s, s), scaled(b, s, s)) == doctest::Approx(v).epsilon(1e-9));
    CHECK(normalized_center_error(scaled(a, s, s), scaled(b, s, s)) ==
          doctest::Approx(normalized_center_error(a, b)).epsilon(1e-9));
    CHECK(center_error(scaled(a, s, s), scaled(b, s, s)) ==
          doctest::Approx(s * center_error(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("iou agrees with the pixel-count oracle on integer boxes") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const BBox a = testing::random_int_box(rng);
    const BBox b = testing::random_int_box(rng);
    CHECK(std::abs(iou(a, b) - testing::raster_iou(a, b)) <= 1e-9);
  }
}

TEST_CASE("clamp_to keeps boxes inside the frame") {
  CHECK(clamp_to({-5, -5, 20, 20}, 100, 100) == BBox{0, 0, 15, 15});
  CHECK(clamp_to({90, 90, 20, 20}, 100, 100) == BBox{90, 90, 10, 10});
  CHECK(clamp_to({200, 0, 20, 20}, 100, 100).is_empty());
}
