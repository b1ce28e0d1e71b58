#pragma once

#include <optional>
#include <random>
#include <stdexcept>

#include "reefloop/geometry.hpp"

// Vehicle dynamics, sensors and dead reckoning.
//
// World frame: x and y horizontal, z down (z is depth). Heading is measured
// from +x toward +y; body axes are surge (forward), sway (right), heave (down).

namespace reefloop::nav {

class NavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VehicleParams {
  double max_surge = 1.0;     ///< m/s
  double max_sway = 1.0;      ///< m/s
  double max_heave = 1.0;     ///< m/s
  double max_yaw_rate = 0.6;  ///< rad/s
  double tau = 0.8;           ///< first-order velocity time constant, s
  double seafloor_depth = 20.0;
};

struct Pose {
  Vec3 position;
  double heading = 0.0;
};

struct VehicleState {
  Vec3 position;
  double heading = 0.0;
  Vec3 velocity;  ///< body frame: x surge, y sway, z heave (down)
  double yaw_rate = 0.0;

  Pose pose() const { return {position, heading}; }
  double altitude(double seafloor_depth) const { return seafloor_depth - position.z; }

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

/// Normalized velocity setpoints in [-1, 1]. Positive heave means up, so a
/// command that respects the altitude floor never has heave < 0 near it.
struct ControlCommand {
  double surge = 0.0;
  double sway = 0.0;
  double heave = 0.0;
  double yaw = 0.0;

  ControlCommand clamped() const;
  bool bounded() const;

  friend bool operator==(const ControlCommand&, const ControlCommand&) = default;
};

/// Advances the vehicle by dt seconds. Velocities follow the exact first-order
/// response; position is integrated with fine internal substeps.
VehicleState step_vehicle(const VehicleState& state, const ControlCommand& cmd, double dt,
                          const VehicleParams& params = {});

struct SensorNoise {
  double velocity_sigma = 0.0;  ///< m/s, per body axis
  double depth_sigma = 0.0;
  double altitude_sigma = 0.0;
  double heading_sigma = 0.0;  ///< rad
  double heading_bias = 0.0;   ///< rad, constant compass miscalibration
};

struct SensorPacket {
  Vec3 dvl_velocity;
  double dvl_altitude = 0.0;
  double compass_heading = 0.0;
  double depth = 0.0;
  double timestamp = 0.0;

  friend bool operator==(const SensorPacket&, const SensorPacket&) = default;
};

SensorPacket sense(const VehicleState& state, double timestamp, const SensorNoise& noise,
                   double seafloor_depth, std::mt19937_64& rng);

struct NavEstimate {
  Vec3 position;
  double heading = 0.0;
  double distance = 0.0;  ///< accumulated path length; grows with uncertainty
  std::optional<SensorPacket> last;

  friend bool operator==(const NavEstimate&, const NavEstimate&) = default;
};

/// Integrates the DVL velocity rotated by the compass heading. Consecutive
/// packets are combined with the trapezoid rule; depth is copied from the
/// depth sensor. Throws NavError if timestamps do not increase.
NavEstimate dead_reckon(const NavEstimate& estimate, const SensorPacket& packet);

/// Body-frame (x forward, y right) horizontal vector rotated into the world.
Vec3 body_to_world(const Vec3& body, double heading);

}  // namespace reefloop::nav
