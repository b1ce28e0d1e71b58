#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>

#include "reefloop/tracker.hpp"

namespace reefloop::tracking {

namespace {

constexpr double kTimeEpsilon = 1e-9;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

void subtract_mean(std::vector<float>& v) {
  double sum = 0.0;
  for (float x : v) sum += x;
  const auto mean = static_cast<float>(sum / static_cast<double>(v.size()));
  for (float& x : v) x -= mean;
}

double l2(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += double(x) * x;
  return std::sqrt(s);
}

}  // namespace

NccTracker::NccTracker(TrackerConfig config) : config_(config) {
  if (config_.kind == TrackerKind::Bridged) throw TrackerError("NccTracker cannot be bridged");
  if (config_.update_rate < 0.0 || config_.update_rate > 1.0)
    throw TrackerError("template update rate must lie in [0, 1]");
  if (config_.search_radius < 0) throw TrackerError("search radius must be non-negative");
  if (config_.scale_step < 0.0 || config_.scale_step >= 1.0) throw TrackerError("scale step must lie in [0, 1)");
  if (config_.kind == TrackerKind::FixedTemplate) config_.update_rate = 0.0;
}

std::string NccTracker::name() const {
  return config_.update_rate > 0.0 ? "ncc-online" : "ncc";
}

std::vector<float> NccTracker::patch(const std::vector<float>& gray, int x0, int y0) const {
  std::vector<float> out(std::size_t(tw_) * th_);
  for (int y = 0; y < th_; ++y) {
    const float* row = gray.data() + std::size_t(y0 + y) * frame_w_ + x0;
    std::copy(row, row + tw_, out.begin() + std::size_t(y) * tw_);
  }
  return out;
}

void NccTracker::init(const Frame& frame, const BBox& box) {
  if (!frame.consistent()) throw TrackerError("frame buffer does not match its dimensions");
  if (!box.valid() || box.area() < kMinInitArea)
    throw TrackerError("degenerate init box (area must be at least 16 px^2)");
  if (box.x < 0.0 || box.y < 0.0 || box.right() > frame.width || box.bottom() > frame.height)
    throw TrackerError("init box lies outside the frame");

  frame_w_ = frame.width;
  frame_h_ = frame.height;
  tw_ = std::max(1, static_cast<int>(std::lround(box.w)));
  th_ = std::max(1, static_cast<int>(std::lround(box.h)));
  tw_ = std::min(tw_, frame_w_);
  th_ = std::min(th_, frame_h_);
  px_ = std::clamp(static_cast<int>(std::lround(box.x)), 0, frame_w_ - tw_);
  py_ = std::clamp(static_cast<int>(std::lround(box.y)), 0, frame_h_ - th_);

  template_ = patch(to_gray(frame), px_, py_);
  subtract_mean(template_);
  template_norm_ = l2(template_);
  box_ = box;
  init_w_ = box.w;
  init_h_ = box.h;
  scale_ = 1.0;
  init_time_ = frame.timestamp;
  initialized_ = true;
}

NccTracker::Match NccTracker::search(const std::vector<float>& gray, int w, int h, int px, int py) const {
  const int r = config_.search_radius;
  const int x_lo = std::max(0, px - r);
  const int x_hi = std::min(w - tw_, px + r);
  const int y_lo = std::max(0, py - r);
  const int y_hi = std::min(h - th_, py + r);
  const double n = static_cast<double>(tw_) * th_;

  Match best{px, py, -2.0};
  int best_dist = 0;
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      double sum = 0.0, sum_sq = 0.0, cross = 0.0;
      for (int j = 0; j < th_; ++j) {
        const float* c = gray.data() + std::size_t(y + j) * w + x;
        const float* t = template_.data() + std::size_t(j) * tw_;
        for (int i = 0; i < tw_; ++i) {
          sum += c[i];
          sum_sq += double(c[i]) * c[i];
          cross += double(t[i]) * c[i];
        }
      }
      const double var = sum_sq - sum * sum / n;
      const double denom = template_norm_ * std::sqrt(std::max(var, 0.0));
      // cross is already centered because the template has zero mean.
      const double score = denom > 1e-6 ? cross / denom : 0.0;
      const int dist = std::abs(x - px) + std::abs(y - py);
      if (score > best.score || (score == best.score && dist < best_dist)) {
        best = {x, y, score};
        best_dist = dist;
      }
    }
  }
  return best;
}

TrackerOutput NccTracker::track(const Frame& frame) {
  const auto start = std::chrono::steady_clock::now();
  if (!initialized_) throw TrackerError("track() called before init()");
  if (frame.width != frame_w_ || frame.height != frame_h_)
    throw TrackerError("frame size changed mid-track");
  if (!frame.consistent()) throw TrackerError("frame buffer does not match its dimensions");

  TrackerOutput out;
  if (config_.init_delay_s > 0.0 &&
      frame.timestamp - init_time_ <= config_.init_delay_s + kTimeEpsilon) {
    out.box = clamp_to(box_, frame_w_, frame_h_);
    out.confidence = 1.0;
    out.status = TrackStatus::Initializing;
    out.latency_ms = elapsed_ms(start);
    return out;
  }

  const std::vector<float> gray = to_gray(frame);
  if (config_.scale_step > 0.0) {
    out = track_scaled(gray);
    out.latency_ms = elapsed_ms(start);
    return out;
  }
  const Match m = search(gray, frame_w_, frame_h_, px_, py_);
  box_ = translated(box_, m.x - px_, m.y - py_);
  px_ = m.x;
  py_ = m.y;

  if (config_.update_rate > 0.0) {
    std::vector<float> fresh = patch(gray, px_, py_);
    subtract_mean(fresh);
    const auto a = static_cast<float>(config_.update_rate);
    for (std::size_t i = 0; i < template_.size(); ++i)
      template_[i] = (1.0f - a) * template_[i] + a * fresh[i];
    template_norm_ = l2(template_);
  }

  out.box = clamp_to(box_, frame_w_, frame_h_);
  out.confidence = std::clamp(m.score, 0.0, 1.0);
  out.status = TrackStatus::Tracking;
  out.latency_ms = elapsed_ms(start);
  return out;
}

std::vector<float> NccTracker::sample(const std::vector<float>& gray, double cx, double cy, double spacing) const {
  std::vector<float> out(std::size_t(tw_) * th_);
  const double x0 = cx - 0.5 * tw_ * spacing;
  const double y0 = cy - 0.5 * th_ * spacing;
  auto px = [&](int x, int y) {
    return gray[std::size_t(std::clamp(y, 0, frame_h_ - 1)) * frame_w_ + std::clamp(x, 0, frame_w_ - 1)];
  };
  for (int j = 0; j < th_; ++j) {
    const double y = y0 + (j + 0.5) * spacing - 0.5;
    const int yi = static_cast<int>(std::floor(y));
    const double fy = y - yi;
    for (int i = 0; i < tw_; ++i) {
      const double x = x0 + (i + 0.5) * spacing - 0.5;
      const int xi = static_cast<int>(std::floor(x));
      const double fx = x - xi;
      const double top = (1 - fx) * px(xi, yi) + fx * px(xi + 1, yi);
      const double bot = (1 - fx) * px(xi, yi + 1) + fx * px(xi + 1, yi + 1);
      out[std::size_t(j) * tw_ + i] = static_cast<float>((1 - fy) * top + fy * bot);
    }
  }
  return out;
}

double NccTracker::score(const std::vector<float>& candidate) const {
  std::vector<float> c = candidate;
  subtract_mean(c);
  const double denom = template_norm_ * l2(c);
  if (denom <= 1e-6) return 0.0;
  double cross = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) cross += double(template_[i]) * c[i];
  return cross / denom;
}

// Translation search on the frame resampled to template scale, then a
// three-way scale vote around the match.
TrackerOutput NccTracker::track_scaled(const std::vector<float>& gray) {
  const double f = scale_;
  const int w = std::max(tw_, static_cast<int>(frame_w_ / f));
  const int h = std::max(th_, static_cast<int>(frame_h_ / f));
  std::vector<float> small(std::size_t(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sx = std::clamp(static_cast<int>((x + 0.5) * f), 0, frame_w_ - 1);
      const int sy = std::clamp(static_cast<int>((y + 0.5) * f), 0, frame_h_ - 1);
      small[std::size_t(y) * w + x] = gray[std::size_t(sy) * frame_w_ + sx];
    }
  }
  const double cx0 = box_.x + 0.5 * box_.w;
  const double cy0 = box_.y + 0.5 * box_.h;
  const int px = std::clamp(static_cast<int>(std::lround(cx0 / f - 0.5 * tw_)), 0, w - tw_);
  const int py = std::clamp(static_cast<int>(std::lround(cy0 / f - 0.5 * th_)), 0, h - th_);
  const Match m = search(small, w, h, px, py);
  const double cx = (m.x + 0.5 * tw_) * f;
  const double cy = (m.y + 0.5 * th_) * f;

  double best_f = f;
  std::vector<float> best_patch = sample(gray, cx, cy, f);
  double best = score(best_patch);
  for (double k : {1.0 / (1.0 + config_.scale_step), 1.0 + config_.scale_step}) {
    const double g = std::clamp(f * k, 0.25, 4.0);
    auto p = sample(gray, cx, cy, g);
    const double sc = score(p);
    if (sc > best) {
      best = sc;
      best_f = g;
      best_patch = std::move(p);
    }
  }
  scale_ = best_f;
  box_ = {cx - 0.5 * init_w_ * scale_, cy - 0.5 * init_h_ * scale_, init_w_ * scale_, init_h_ * scale_};
  px_ = static_cast<int>(std::lround(box_.x));
  py_ = static_cast<int>(std::lround(box_.y));

  if (config_.update_rate > 0.0) {
    subtract_mean(best_patch);
    const auto a = static_cast<float>(config_.update_rate);
    for (std::size_t i = 0; i < template_.size(); ++i)
      template_[i] = (1.0f - a) * template_[i] + a * best_patch[i];
    template_norm_ = l2(template_);
  }

  TrackerOutput out;
  out.box = clamp_to(box_, frame_w_, frame_h_);
  out.confidence = std::clamp(best, 0.0, 1.0);
  out.status = TrackStatus::Tracking;
  return out;
}

ReplayTracker::ReplayTracker(std::string name, std::vector<BBox> boxes)
    : name_(std::move(name)), boxes_(std::move(boxes)) {}

void ReplayTracker::init(const Frame&, const BBox&) { next_ = 1; }

TrackerOutput ReplayTracker::track(const Frame&) {
  const auto start = std::chrono::steady_clock::now();
  TrackerOutput out;
  if (!boxes_.empty()) out.box = boxes_[std::min(next_, boxes_.size() - 1)];
  ++next_;
  out.confidence = out.box.valid() ? 1.0 : 0.0;
  out.latency_ms = elapsed_ms(start);
  return out;
}

double template_distance(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw TrackerError("template sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace reefloop::tracking
