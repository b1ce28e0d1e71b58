#include "reefloop/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace reefloop {

namespace {

// Length of [a0, a0+aw) ∩ [b0, b0+bw). When the overlap is one of the inputs
// its own extent is returned so that iou(a, a) is exactly 1.
double overlap(double a0, double aw, double b0, double bw) {
  const double lo = std::max(a0, b0);
  const double hi = std::min(a0 + aw, b0 + bw);
  if (hi <= lo) return 0.0;
  if (lo == a0 && hi == a0 + aw) return aw;
  if (lo == b0 && hi == b0 + bw) return bw;
  return hi - lo;
}

}  // namespace

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

double iou(const BBox& a, const BBox& b) {
  if (a.is_empty() || b.is_empty()) return 0.0;
  const double iw = overlap(a.x, a.w, b.x, b.w);
  const double ih = overlap(a.y, a.h, b.y, b.h);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double center_error(const BBox& pred, const BBox& gt) {
  if (pred.is_empty()) return kInfiniteError;
  const Point2 p = center(pred);
  const Point2 g = center(gt);
  return std::hypot(p.u - g.u, p.v - g.v);
}

double normalized_center_error(const BBox& pred, const BBox& gt) {
  if (pred.is_empty()) return kInfiniteError;
  const Point2 p = center(pred);
  const Point2 g = center(gt);
  return std::hypot((p.u - g.u) / gt.w, (p.v - g.v) / gt.h);
}

BBox clamp_to(const BBox& b, double width, double height) {
  if (b.is_empty()) return BBox::empty();
  const double x0 = std::clamp(b.x, 0.0, width);
  const double y0 = std::clamp(b.y, 0.0, height);
  const double x1 = std::clamp(b.right(), 0.0, width);
  const double y1 = std::clamp(b.bottom(), 0.0, height);
  if (x1 <= x0 || y1 <= y0) return BBox::empty();
  return {x0, y0, x1 - x0, y1 - y0};
}

BBox translated(const BBox& b, double du, double dv) { return {b.x + du, b.y + dv, b.w, b.h}; }

BBox scaled(const BBox& b, double sx, double sy) { return {b.x * sx, b.y * sy, b.w * sx, b.h * sy}; }

}  // namespace reefloop
