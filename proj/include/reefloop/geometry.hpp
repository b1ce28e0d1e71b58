#pragma once

#include <limits>

namespace reefloop {

/// Axis-aligned box in pixel coordinates (top-left origin, x right, y down).
///
/// A box with non-positive width or height is the "empty" marker used for
/// frames where a tracker produced no prediction.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  static constexpr BBox empty() { return {}; }

  constexpr bool valid() const { return w > 0.0 && h > 0.0; }
  constexpr bool is_empty() const { return !valid(); }
  constexpr double area() const { return valid() ? w * h : 0.0; }
  constexpr double right() const { return x + w; }
  constexpr double bottom() const { return y + h; }

  friend constexpr bool operator==(const BBox&, const BBox&) = default;
};

struct Point2 {
  double u = 0.0;
  double v = 0.0;

  friend constexpr bool operator==(const Point2&, const Point2&) = default;
};

/// World/body-frame 3-vector (meters or m/s).
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;

  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

inline constexpr double kInfiniteError = std::numeric_limits<double>::infinity();

constexpr Point2 center(const BBox& b) { return {b.x + 0.5 * b.w, b.y + 0.5 * b.h}; }

/// Intersection over union; 0 when either box is empty or they are disjoint.
double iou(const BBox& a, const BBox& b);

/// Euclidean distance between box centers. Empty prediction -> +inf.
double center_error(const BBox& pred, const BBox& gt);

/// Center offset normalized per axis by the ground-truth width and height.
/// Empty prediction -> +inf.
double normalized_center_error(const BBox& pred, const BBox& gt);

/// Intersection of `b` with the rectangle [0,width) x [0,height). Returns the
/// empty box if nothing remains.
BBox clamp_to(const BBox& b, double width, double height);

BBox translated(const BBox& b, double du, double dv);
BBox scaled(const BBox& b, double sx, double sy);

}  // namespace reefloop
