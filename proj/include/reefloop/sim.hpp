#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "reefloop/geometry.hpp"
#include "reefloop/image.hpp"
#include "reefloop/nav.hpp"

namespace reefloop::sim {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MotionKind { ConstantSwim, StopAndGo, Darting, Crawl };

struct MotionModel {
  MotionKind kind = MotionKind::ConstantSwim;
  double speed = 0.5;       ///< m/s
  double move_s = 2.0;      ///< StopAndGo
  double pause_s = 3.0;     ///< StopAndGo
  double dart_rate = 0.0;   ///< Darting: impulses per second
  double dart_impulse = 1.0;  ///< Darting: m/s added along the heading
  double dart_decay_s = 0.5;  ///< Darting: impulse time constant
  double turn_noise = 0.0;  ///< rad / sqrt(s)
};

/// Physical size of a sprite: length along its heading, width across it,
/// height vertically. Position refers to the body center.
struct Extent {
  double length = 0.6;
  double width = 0.25;
  double height = 0.25;
};

struct Sprite {
  Extent extent;
  std::uint32_t texture_seed = 7;
  std::array<std::uint8_t, 3> color_a{235, 140, 40};
  std::array<std::uint8_t, 3> color_b{250, 240, 220};
};

struct AnimalState {
  Vec3 position;
  Vec3 velocity;  ///< world frame
  double heading = 0.0;
  double clock = 0.0;  ///< time since start, drives duty cycles
  double dart = 0.0;   ///< current dart speed on top of the base speed

  friend bool operator==(const AnimalState&, const AnimalState&) = default;
};

struct WorldBounds {
  double x_min = -50, x_max = 50;
  double y_min = -50, y_max = 50;
};

struct Distractor {
  Sprite sprite;
  MotionModel motion;
  AnimalState initial;
};

/// Instantaneous jump applied to the animal (constructed failure cases).
struct Teleport {
  double t = 0.0;
  Vec3 offset;
};

struct CameraModel {
  double focal = 240.0;  ///< pixels
  double cx = 160.0;
  double cy = 120.0;
  int width = 320;
  int height = 240;
  double tilt = 0.5235987755982988;  ///< radians below the horizon (30 deg)
};

enum class Background { Seafloor, Midwater };

struct Scenario {
  std::string id = "scenario";
  std::uint64_t seed = 1;
  WorldBounds bounds;
  double seafloor_depth = 20.0;
  std::array<double, 3> beta{0.35, 0.07, 0.03};  ///< 1/m, red >= green >= blue
  std::array<std::uint8_t, 3> water_color{10, 60, 80};
  double snow_density = 0.0;  ///< particles per m^3
  double snow_range = 8.0;    ///< m, how far out snow is drawn
  Background background = Background::Seafloor;
  Sprite animal;
  MotionModel motion;
  AnimalState animal_start;
  std::vector<Distractor> distractors;
  std::vector<Teleport> teleports;
  nav::VehicleState vehicle_start;
  nav::VehicleParams vehicle;
  nav::SensorNoise sensors;
  CameraModel camera;
  double duration = 60.0;  ///< s
  double frame_rate = 10.0;  ///< Hz

  /// Throws SimError describing the first violated invariant.
  void validate() const;
};

Scenario parse_scenario(const std::string& toml_text);
Scenario load_scenario(const std::filesystem::path& file);

/// Bottom of the body above the seafloor.
double animal_altitude(const AnimalState& a, const Extent& e, double seafloor_depth);

/// One dt step of the behavior model. Bounds are enforced by reflection.
AnimalState step_animal(const AnimalState& state, const MotionModel& model, double dt, std::mt19937_64& rng,
                        const Extent& extent = {}, const WorldBounds& bounds = {}, double seafloor_depth = 20.0);

/// World point -> camera frame (x right, y down, z along the optical axis).
Vec3 world_to_camera(const CameraModel& cam, const nav::Pose& pose, const Vec3& p);

/// Pinhole projection; nullopt for points at or behind the camera plane.
std::optional<Point2> project(const CameraModel& cam, const nav::Pose& pose, const Vec3& p);

/// The 8 corners of the heading-aligned extent box.
std::array<Vec3, 8> extent_corners(const AnimalState& a, const Extent& e);

/// Clipped hull of the projected corners; nullopt when off-screen or when any
/// corner is behind the camera.
std::optional<BBox> gt_bbox(const CameraModel& cam, const nav::Pose& pose, const AnimalState& a, const Extent& e);

/// Unclipped hull (may extend past the image).
std::optional<BBox> projected_hull(const CameraModel& cam, const nav::Pose& pose, const AnimalState& a,
                                   const Extent& e);

/// Renders one frame. `frame_seed` drives the marine snow only.
Frame render_frame(const Scenario& sc, const nav::Pose& pose, const AnimalState& animal,
                   const std::vector<AnimalState>& distractors, std::uint64_t frame_seed, double timestamp = 0.0);

/// Fraction of the source color left after traveling `range` meters.
inline double transmission(double beta, double range) { return std::exp(-beta * range); }

/// Steps the scenario world (animal, distractors, scripted teleports) in
/// lockstep with the caller's clock.
class World {
 public:
  explicit World(const Scenario& sc);

  void step(double dt);
  const AnimalState& animal() const { return animal_; }
  const std::vector<AnimalState>& distractors() const { return distractors_; }
  double time() const { return t_; }
  const Scenario& scenario() const { return sc_; }

 private:
  Scenario sc_;
  std::vector<std::mt19937_64> rngs_;  // one stream per moving body
  AnimalState animal_;
  std::vector<AnimalState> distractors_;
  std::size_t next_teleport_ = 0;
  double t_ = 0.0;
};

}  // namespace reefloop::sim
