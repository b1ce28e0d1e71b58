#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "reefloop/geometry.hpp"
#include "reefloop/image.hpp"

namespace reefloop::tracking {

class TrackerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrackerKind {
  FixedTemplate,  ///< first-frame template, never updated
  OnlineFilter,   ///< template blended toward each new match
  Bridged,        ///< external process behind the wire protocol
};

struct TrackerConfig {
  TrackerKind kind = TrackerKind::FixedTemplate;
  int search_radius = 16;    ///< pixels
  double update_rate = 0.0;  ///< template blend factor in [0, 1]; 0 keeps the template fixed
  double init_delay_s = 0.0; ///< simulated start-up time before the first real output
  /// Relative scale tried either side of the current one each frame. 0 keeps
  /// the init box size for the whole track.
  double scale_step = 0.0;

  static TrackerConfig fixed_template(int radius = 16) {
    return {TrackerKind::FixedTemplate, radius, 0.0, 0.0, 0.0};
  }
  static TrackerConfig online(double rate = 0.1, int radius = 16) {
    return {TrackerKind::OnlineFilter, radius, rate, 0.0, 0.0};
  }
};

enum class TrackStatus { Initializing, Tracking };

struct TrackerOutput {
  BBox box;
  double confidence = 0.0;  ///< [0, 1]
  double latency_ms = 0.0;
  TrackStatus status = TrackStatus::Tracking;
};

/// Single-target tracker contract. A tracker is owned by one caller; calls
/// must not overlap.
class Tracker {
 public:
  virtual ~Tracker() = default;

  virtual std::string name() const = 0;
  /// Starts a track on `frame` from the operator/ground-truth box.
  virtual void init(const Frame& frame, const BBox& box) = 0;
  virtual TrackerOutput track(const Frame& frame) = 0;
};

/// Brute-force normalized cross-correlation matcher. With update_rate 0 it is
/// a fixed-template matcher; with update_rate > 0 the template follows the
/// target (and whatever else ends up inside the box).
class NccTracker final : public Tracker {
 public:
  static constexpr double kMinInitArea = 16.0;

  explicit NccTracker(TrackerConfig config);

  std::string name() const override;
  void init(const Frame& frame, const BBox& box) override;
  TrackerOutput track(const Frame& frame) override;

  /// Current template (mean-subtracted luma, row-major, template_width() wide).
  const std::vector<float>& template_snapshot() const { return template_; }
  int template_width() const { return tw_; }
  int template_height() const { return th_; }
  const TrackerConfig& config() const { return config_; }

 private:
  struct Match {
    int x = 0;
    int y = 0;
    double score = 0.0;
  };

  Match search(const std::vector<float>& gray, int w, int h, int px, int py) const;
  std::vector<float> patch(const std::vector<float>& gray, int x0, int y0) const;
  /// Template-sized patch centered at (cx, cy) with `spacing` frame pixels
  /// between samples (bilinear).
  std::vector<float> sample(const std::vector<float>& gray, double cx, double cy, double spacing) const;
  double score(const std::vector<float>& candidate) const;
  TrackerOutput track_scaled(const std::vector<float>& gray);

  TrackerConfig config_;
  bool initialized_ = false;
  int frame_w_ = 0;
  int frame_h_ = 0;
  double init_time_ = 0.0;
  BBox box_;
  int px_ = 0;  // integer top-left of the current match
  int py_ = 0;
  int tw_ = 0;
  int th_ = 0;
  std::vector<float> template_;
  double template_norm_ = 0.0;
  double scale_ = 1.0;  // current box size / init box size
  double init_w_ = 0.0;
  double init_h_ = 0.0;
};

/// Plays back a fixed list of boxes, one per track() call after init. Used as
/// the ground-truth "oracle" tracker and as a test double.
class ReplayTracker final : public Tracker {
 public:
  ReplayTracker(std::string name, std::vector<BBox> boxes);

  std::string name() const override { return name_; }
  void init(const Frame& frame, const BBox& box) override;
  TrackerOutput track(const Frame& frame) override;

 private:
  std::string name_;
  std::vector<BBox> boxes_;
  std::size_t next_ = 0;
};

/// Euclidean distance between two template snapshots of equal size.
double template_distance(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace reefloop::tracking
