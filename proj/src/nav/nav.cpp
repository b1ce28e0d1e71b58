#include "reefloop/nav.hpp"

#include <algorithm>
#include <cmath>

namespace reefloop::nav {

namespace {

constexpr int kSubsteps = 20;
constexpr double kMaxDt = 0.2;

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

// First-order response from v0 toward target: value and integral at time t.
struct Relax {
  double v0, target, tau;
  double value(double t) const { return target + (v0 - target) * std::exp(-t / tau); }
  double integral(double t) const { return target * t + (v0 - target) * tau * (1.0 - std::exp(-t / tau)); }
};

}  // namespace

ControlCommand ControlCommand::clamped() const {
  return {clamp_unit(surge), clamp_unit(sway), clamp_unit(heave), clamp_unit(yaw)};
}

bool ControlCommand::bounded() const {
  auto ok = [](double v) { return v >= -1.0 && v <= 1.0; };
  return ok(surge) && ok(sway) && ok(heave) && ok(yaw);
}

Vec3 body_to_world(const Vec3& body, double heading) {
  const double c = std::cos(heading), s = std::sin(heading);
  return {c * body.x - s * body.y, s * body.x + c * body.y, body.z};
}

VehicleState step_vehicle(const VehicleState& state, const ControlCommand& raw, double dt,
                          const VehicleParams& p) {
  if (!(dt > 0.0 && dt <= kMaxDt)) throw NavError("vehicle step dt must lie in (0, 0.2] s");
  const ControlCommand cmd = raw.clamped();

  const Relax u{state.velocity.x, cmd.surge * p.max_surge, p.tau};
  const Relax v{state.velocity.y, cmd.sway * p.max_sway, p.tau};
  // positive heave command = up = negative body z velocity
  const Relax w{state.velocity.z, -cmd.heave * p.max_heave, p.tau};
  const Relax r{state.yaw_rate, cmd.yaw * p.max_yaw_rate, p.tau};

  auto planar = [&](double t) {
    return body_to_world({u.value(t), v.value(t), 0.0}, state.heading + r.integral(t));
  };

  // Simpson's rule per substep for the horizontal track.
  Vec3 pos = state.position;
  const double h = dt / kSubsteps;
  for (int i = 0; i < kSubsteps; ++i) {
    const double t0 = i * h;
    pos = pos + (planar(t0) + planar(t0 + 0.5 * h) * 4.0 + planar(t0 + h)) * (h / 6.0);
  }
  pos.z = state.position.z + w.integral(dt);

  VehicleState next;
  next.velocity = {u.value(dt), v.value(dt), w.value(dt)};
  next.yaw_rate = r.value(dt);
  next.heading = state.heading + r.integral(dt);
  next.position = pos;
  if (next.position.z < 0.0 || next.position.z > p.seafloor_depth) {
    next.position.z = std::clamp(next.position.z, 0.0, p.seafloor_depth);
    next.velocity.z = 0.0;
  }
  return next;
}

SensorPacket sense(const VehicleState& state, double timestamp, const SensorNoise& noise,
                   double seafloor_depth, std::mt19937_64& rng) {
  auto jitter = [&rng](double sigma) {
    if (sigma <= 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(rng);
  };
  SensorPacket pk;
  pk.timestamp = timestamp;
  pk.dvl_velocity = {state.velocity.x + jitter(noise.velocity_sigma),
                     state.velocity.y + jitter(noise.velocity_sigma),
                     state.velocity.z + jitter(noise.velocity_sigma)};
  pk.depth = state.position.z + jitter(noise.depth_sigma);
  pk.dvl_altitude = std::max(0.0, seafloor_depth - state.position.z + jitter(noise.altitude_sigma));
  pk.compass_heading = state.heading + noise.heading_bias + jitter(noise.heading_sigma);
  return pk;
}

NavEstimate dead_reckon(const NavEstimate& est, const SensorPacket& pk) {
  NavEstimate next = est;
  if (est.last) {
    const double dt = pk.timestamp - est.last->timestamp;
    if (!(dt > 0.0)) throw NavError("sensor packets out of order");
    const Vec3 a = body_to_world(est.last->dvl_velocity, est.last->compass_heading);
    const Vec3 b = body_to_world(pk.dvl_velocity, pk.compass_heading);
    const Vec3 step{0.5 * (a.x + b.x) * dt, 0.5 * (a.y + b.y) * dt, 0.0};
    next.position.x += step.x;
    next.position.y += step.y;
    next.distance += std::hypot(step.x, step.y);
  }
  next.position.z = pk.depth;
  next.heading = pk.compass_heading;
  next.last = pk;
  return next;
}

}  // namespace reefloop::nav
