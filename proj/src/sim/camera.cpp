#include <algorithm>
#include <cmath>
#include <limits>

#include "reefloop/sim.hpp"

namespace reefloop::sim {

namespace {
constexpr double kMinDepth = 1e-6;
}

Vec3 world_to_camera(const CameraModel& cam, const nav::Pose& pose, const Vec3& p) {
  const Vec3 d = p - pose.position;
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  const double xb = c * d.x + s * d.y;
  const double yb = -s * d.x + c * d.y;
  const double zb = d.z;
  const double ct = std::cos(cam.tilt), st = std::sin(cam.tilt);
  return {yb, -st * xb + ct * zb, ct * xb + st * zb};
}

std::optional<Point2> project(const CameraModel& cam, const nav::Pose& pose, const Vec3& p) {
  const Vec3 q = world_to_camera(cam, pose, p);
  if (q.z <= kMinDepth) return std::nullopt;
  return Point2{cam.cx + cam.focal * q.x / q.z, cam.cy + cam.focal * q.y / q.z};
}

std::array<Vec3, 8> extent_corners(const AnimalState& a, const Extent& e) {
  const Vec3 fwd{std::cos(a.heading) * 0.5 * e.length, std::sin(a.heading) * 0.5 * e.length, 0.0};
  const Vec3 side{-std::sin(a.heading) * 0.5 * e.width, std::cos(a.heading) * 0.5 * e.width, 0.0};
  const Vec3 up{0.0, 0.0, 0.5 * e.height};
  std::array<Vec3, 8> out;
  int i = 0;
  for (double f : {-1.0, 1.0})
    for (double s : {-1.0, 1.0})
      for (double u : {-1.0, 1.0}) out[i++] = a.position + fwd * f + side * s + up * u;
  return out;
}

std::optional<BBox> projected_hull(const CameraModel& cam, const nav::Pose& pose, const AnimalState& a,
                                   const Extent& e) {
  double u0 = std::numeric_limits<double>::infinity(), v0 = u0;
  double u1 = -u0, v1 = -u0;
  for (const Vec3& c : extent_corners(a, e)) {
    const auto p = project(cam, pose, c);
    if (!p) return std::nullopt;
    u0 = std::min(u0, p->u);
    u1 = std::max(u1, p->u);
    v0 = std::min(v0, p->v);
    v1 = std::max(v1, p->v);
  }
  return BBox{u0, v0, u1 - u0, v1 - v0};
}

std::optional<BBox> gt_bbox(const CameraModel& cam, const nav::Pose& pose, const AnimalState& a, const Extent& e) {
  const auto hull = projected_hull(cam, pose, a, e);
  if (!hull) return std::nullopt;
  const BBox clipped = clamp_to(*hull, cam.width, cam.height);
  if (!clipped.valid()) return std::nullopt;
  return clipped;
}

}  // namespace reefloop::sim
