#include "reefloop/servo.hpp"

#include <algorithm>
#include <sstream>

#include <toml.hpp>

namespace reefloop::servo {

double pid_step(const PidGains& g, PidState& s, double error, double dt, double integral_clamp) {
  if (!(dt > 0.0)) throw ServoError("pid dt must be positive");
  s.integral = std::clamp(s.integral + error * dt, -integral_clamp, integral_clamp);
  const double derivative = s.primed ? (error - s.prev_error) / dt : 0.0;
  s.prev_error = error;
  s.primed = true;
  return g.kp * error + g.ki * s.integral + g.kd * derivative;
}

ImageErrors compute_errors(const BBox& box, double frame_w, double frame_h, double reference_width) {
  const Point2 c = center(box);
  return {(c.u - frame_w / 2) / frame_w, (c.v - frame_h / 2) / frame_h,
          (reference_width - box.w) / reference_width};
}

void ServoConfig::validate() const {
  for (const PidGains* g : {&yaw, &heave, &surge})
    if (g->kp < 0 || g->ki < 0 || g->kd < 0) throw ServoError("servo gains must be non-negative");
  if (altitude_floor < 0.5 || altitude_floor > 1.0) throw ServoError("altitude floor must lie in [0.5, 1.0] m");
  if (loss_threshold < 0 || loss_threshold > 1) throw ServoError("loss threshold must lie in [0, 1]");
  if (loss_patience < 1) throw ServoError("loss patience must be at least one frame");
  if (integral_clamp < 0 || descent_gain < 0 || floor_gain < 0 || reference_width < 0)
    throw ServoError("servo limits must be non-negative");
}

ServoConfig parse_servo_config(const std::string& text) {
  toml::table doc;
  try {
    doc = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "servo config: " << e.description() << " at line " << e.source().begin.line;
    throw ServoError(msg.str());
  }
  ServoConfig c;
  const auto s = doc["servo"];
  if (!s) return c;
  if (!s.is_table()) throw ServoError("servo config: [servo] must be a table");
  auto num = [&](const char* key, double& out) {
    const auto n = s[key];
    if (!n) return;
    const auto v = n.value<double>();
    if (!v) throw ServoError(std::string("servo config: ") + key + " must be a number");
    out = *v;
  };
  auto gains = [&](const char* key, PidGains& g) {
    const auto n = s[key];
    if (!n) return;
    const auto* a = n.as_array();
    if (!a || a->size() != 3) throw ServoError(std::string("servo config: ") + key + " must be [kp, ki, kd]");
    double* out[] = {&g.kp, &g.ki, &g.kd};
    for (std::size_t i = 0; i < 3; ++i) {
      const auto v = (*a)[i].value<double>();
      if (!v) throw ServoError(std::string("servo config: ") + key + " must hold numbers");
      *out[i] = *v;
    }
  };
  num("reference_width", c.reference_width);
  gains("yaw", c.yaw);
  gains("heave", c.heave);
  gains("surge", c.surge);
  num("integral_clamp", c.integral_clamp);
  num("altitude_floor", c.altitude_floor);
  num("descent_gain", c.descent_gain);
  num("floor_gain", c.floor_gain);
  num("loss_threshold", c.loss_threshold);
  if (const auto p = s["loss_patience"]) {
    const auto v = p.value<std::int64_t>();
    if (!v) throw ServoError("servo config: loss_patience must be an integer");
    c.loss_patience = static_cast<int>(*v);
  }
  c.validate();
  return c;
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Manual: return "manual";
    case Mode::Initializing: return "initializing";
    case Mode::Tracking: return "tracking";
    case Mode::Lost: return "lost";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : kAllModes)
    if (mode_name(m) == s) return m;
  return std::nullopt;
}

std::string_view event_name(Event e) {
  switch (e) {
    case Event::InitBox: return "init_box";
    case Event::Reinit: return "reinit";
    case Event::TrackerReady: return "tracker_ready";
    case Event::GoodFrame: return "good_frame";
    case Event::WeakFrame: return "weak_frame";
    case Event::Override: return "override";
    case Event::Release: return "release";
    case Event::TrackerDisconnect: return "tracker_disconnect";
    case Event::Tick: return "tick";
  }
  return "?";
}

ModeState mode_update(const ModeState& s, Event e, const ServoConfig& cfg) {
  ModeState n = s;
  switch (e) {
    case Event::InitBox:
    case Event::Reinit:
      n = {Mode::Initializing, 0, false};
      break;
    case Event::TrackerReady:
      n.tracker_ready = true;
      if (s.mode == Mode::Initializing) {
        n.mode = Mode::Tracking;
        n.weak_frames = 0;
      }
      break;
    case Event::GoodFrame:
      if (s.mode == Mode::Tracking) n.weak_frames = 0;
      break;
    case Event::WeakFrame:
      if (s.mode == Mode::Tracking && ++n.weak_frames >= cfg.loss_patience) {
        n.mode = Mode::Lost;
        n.tracker_ready = false;
      }
      break;
    case Event::Override:
      n.mode = Mode::Manual;
      n.weak_frames = 0;
      break;
    case Event::Release:
      if (s.mode == Mode::Manual && s.tracker_ready) {
        n.mode = Mode::Tracking;
        n.weak_frames = 0;
      }
      break;
    case Event::TrackerDisconnect:
      n.tracker_ready = false;
      if (s.mode == Mode::Tracking || s.mode == Mode::Initializing) n.mode = Mode::Lost;
      break;
    case Event::Tick:
      if (s.mode == Mode::Lost) {
        n.mode = Mode::Manual;
        n.weak_frames = 0;
      }
      break;
  }
  return n;
}

double guard_heave(double heave, double altitude, const ServoConfig& cfg) {
  const double clearance = altitude - cfg.altitude_floor;
  if (clearance < 0.0) return std::max({heave, 0.0, std::min(1.0, -clearance * cfg.floor_gain)});
  return std::max(heave, -cfg.descent_gain * clearance);
}

ServoController::ServoController(ServoConfig cfg) : cfg_(cfg), reference_width_(cfg.reference_width) {
  cfg_.validate();
}

void ServoController::reset_loops() { yaw_ = heave_ = surge_ = PidState{}; }

void ServoController::init_box(const BBox& box) {
  if (!box.valid()) throw ServoError("init box must have positive size");
  if (cfg_.reference_width <= 0.0) reference_width_ = box.w;
  handle(Event::InitBox);
}

void ServoController::handle(Event e) {
  const Mode before = mode_.mode;
  mode_ = mode_update(mode_, e, cfg_);
  if (mode_.mode == Mode::Tracking && before != Mode::Tracking) reset_loops();
  if (mode_.mode == Mode::Lost && before != Mode::Lost) manual_ = {};
}

nav::ControlCommand ServoController::step(const TrackReport& report, const nav::SensorPacket& sensors,
                                          double frame_w, double frame_h, double dt) {
  handle(Event::Tick);
  if (report.disconnected) handle(Event::TrackerDisconnect);
  if (mode_.mode == Mode::Initializing && report.ready && report.box) handle(Event::TrackerReady);
  const bool usable = report.box && report.box->valid() && report.ready;
  if (mode_.mode == Mode::Tracking)
    handle(usable && report.confidence >= cfg_.loss_threshold ? Event::GoodFrame : Event::WeakFrame);

  nav::ControlCommand cmd;
  if (mode_.mode == Mode::Tracking && usable && reference_width_ > 0.0) {
    const ImageErrors e = compute_errors(*report.box, frame_w, frame_h, reference_width_);
    cmd.yaw = pid_step(cfg_.yaw, yaw_, e.ex, dt, cfg_.integral_clamp);
    // target below center -> sink; heave is positive up
    cmd.heave = -pid_step(cfg_.heave, heave_, e.ey, dt, cfg_.integral_clamp);
    cmd.surge = pid_step(cfg_.surge, surge_, e.ew, dt, cfg_.integral_clamp);
  } else if (mode_.mode == Mode::Manual) {
    cmd = manual_;
  }
  cmd = cmd.clamped();
  cmd.heave = std::clamp(guard_heave(cmd.heave, sensors.dvl_altitude, cfg_), -1.0, 1.0);
  return cmd;
}

}  // namespace reefloop::servo
