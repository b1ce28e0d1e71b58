#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "reefloop/geometry.hpp"
#include "reefloop/nav.hpp"

namespace reefloop::servo {

class ServoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PidGains {
  double kp = 1.2;
  double ki = 0.05;
  double kd = 0.1;
};

struct PidState {
  double integral = 0.0;
  double prev_error = 0.0;
  bool primed = false;  ///< false until the first sample; suppresses the derivative kick
};

/// kp*e + ki*integral + kd*de/dt, with |integral| <= integral_clamp.
double pid_step(const PidGains& g, PidState& s, double error, double dt, double integral_clamp = 1.0);

struct ImageErrors {
  double ex = 0.0;  ///< horizontal offset of the box center, fraction of width (+ = right)
  double ey = 0.0;  ///< vertical offset, fraction of height (+ = below center)
  double ew = 0.0;  ///< (reference - width) / reference (+ = target looks small)
};

ImageErrors compute_errors(const BBox& box, double frame_w, double frame_h, double reference_width);

struct ServoConfig {
  double reference_width = 0.0;  ///< pixels; 0 = take it from the init box
  PidGains yaw;
  PidGains heave;
  PidGains surge;
  double integral_clamp = 0.5;
  double altitude_floor = 0.75;  ///< m
  double descent_gain = 0.3;     ///< max downward command per meter of clearance above the floor
  double floor_gain = 2.0;       ///< upward command per meter below the floor
  double loss_threshold = 0.4;
  int loss_patience = 5;  ///< consecutive frames

  /// Throws ServoError on negative gains, floor outside [0.5, 1] etc.
  void validate() const;
};

/// Reads a `[servo]` table from TOML text; absent keys keep defaults.
ServoConfig parse_servo_config(const std::string& toml_text);

enum class Mode { Manual, Initializing, Tracking, Lost };
std::string_view mode_name(Mode m);
std::optional<Mode> parse_mode(std::string_view s);

enum class Event {
  InitBox,           ///< operator drew a box
  Reinit,            ///< operator asked to restart the track
  TrackerReady,      ///< tracker finished its start-up phase
  GoodFrame,         ///< confidence at or above threshold
  WeakFrame,         ///< confidence below threshold (or no box)
  Override,          ///< operator took the sticks
  Release,           ///< operator hands control back
  TrackerDisconnect, ///< tracker process or link died
  Tick,              ///< once per control tick, after the frame
};
inline constexpr Event kAllEvents[] = {Event::InitBox,  Event::Reinit,   Event::TrackerReady,
                                       Event::GoodFrame, Event::WeakFrame, Event::Override,
                                       Event::Release,  Event::TrackerDisconnect, Event::Tick};
inline constexpr Mode kAllModes[] = {Mode::Manual, Mode::Initializing, Mode::Tracking, Mode::Lost};
std::string_view event_name(Event e);

struct ModeState {
  Mode mode = Mode::Manual;
  int weak_frames = 0;
  bool tracker_ready = false;  ///< the running track produced real output

  friend bool operator==(const ModeState&, const ModeState&) = default;
};

/// Total transition function over (mode, event).
ModeState mode_update(const ModeState& s, Event e, const ServoConfig& cfg);

/// What the tracker produced this tick.
struct TrackReport {
  std::optional<BBox> box;
  double confidence = 0.0;
  bool ready = true;  ///< false while the tracker reports it is initializing
  bool disconnected = false;  ///< the tracker died this tick
};

/// Limits heave so the vehicle cannot be driven through the altitude floor.
double guard_heave(double heave, double altitude, const ServoConfig& cfg);

/// One control tick: owns the PID loops and the mode machine. Operator events
/// are delivered through handle() before step().
class ServoController {
 public:
  explicit ServoController(ServoConfig cfg = {});

  /// Init box from the operator: captures the reference width when the config
  /// leaves it open.
  void init_box(const BBox& box);
  void handle(Event e);
  void set_manual_command(const nav::ControlCommand& cmd) { manual_ = cmd.clamped(); }

  nav::ControlCommand step(const TrackReport& report, const nav::SensorPacket& sensors, double frame_w,
                           double frame_h, double dt);

  Mode mode() const { return mode_.mode; }
  const ModeState& mode_state() const { return mode_; }
  double reference_width() const { return reference_width_; }
  const ServoConfig& config() const { return cfg_; }

 private:
  void reset_loops();

  ServoConfig cfg_;
  ModeState mode_;
  double reference_width_ = 0.0;
  PidState yaw_, heave_, surge_;
  nav::ControlCommand manual_;
};

}  // namespace reefloop::servo
