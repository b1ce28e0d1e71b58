#include <fstream>
#include <numbers>
#include <sstream>

#include <toml.hpp>

#include "reefloop/sim.hpp"

namespace reefloop::sim {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

[[noreturn]] void fail(const std::string& what) { throw SimError("scenario: " + what); }

double num(const toml::node_view<const toml::node>& n, double fallback, const char* key) {
  if (!n) return fallback;
  if (auto v = n.value<double>()) return *v;
  fail(std::string(key) + " must be a number");
}

Vec3 vec3(const toml::node_view<const toml::node>& n, Vec3 fallback, const char* key) {
  if (!n) return fallback;
  const auto* a = n.as_array();
  if (!a || a->size() != 3) fail(std::string(key) + " must be [x, y, z]");
  Vec3 v;
  double* out[] = {&v.x, &v.y, &v.z};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto d = (*a)[i].value<double>();
    if (!d) fail(std::string(key) + " must hold numbers");
    *out[i] = *d;
  }
  return v;
}

std::array<double, 3> triple(const toml::node_view<const toml::node>& n, std::array<double, 3> fallback,
                             const char* key) {
  const Vec3 v = vec3(n, {fallback[0], fallback[1], fallback[2]}, key);
  return {v.x, v.y, v.z};
}

std::array<std::uint8_t, 3> rgb(const toml::node_view<const toml::node>& n, std::array<std::uint8_t, 3> fallback,
                                const char* key) {
  const auto t = triple(n, {double(fallback[0]), double(fallback[1]), double(fallback[2])}, key);
  std::array<std::uint8_t, 3> out{};
  for (int i = 0; i < 3; ++i) {
    if (t[i] < 0 || t[i] > 255) fail(std::string(key) + " components must lie in [0, 255]");
    out[i] = static_cast<std::uint8_t>(t[i]);
  }
  return out;
}

std::pair<double, double> range2(const toml::node_view<const toml::node>& n, std::pair<double, double> fallback,
                                 const char* key) {
  if (!n) return fallback;
  const auto* a = n.as_array();
  if (!a || a->size() != 2 || !(*a)[0].value<double>() || !(*a)[1].value<double>())
    fail(std::string(key) + " must be [min, max]");
  return {*(*a)[0].value<double>(), *(*a)[1].value<double>()};
}

MotionModel motion(const toml::node_view<const toml::node>& n) {
  MotionModel m;
  if (!n) return m;
  const std::string kind = n["kind"].value_or(std::string("constant_swim"));
  if (kind == "constant_swim") m.kind = MotionKind::ConstantSwim;
  else if (kind == "stop_and_go") m.kind = MotionKind::StopAndGo;
  else if (kind == "darting") m.kind = MotionKind::Darting;
  else if (kind == "crawl") m.kind = MotionKind::Crawl;
  else fail("unknown motion kind '" + kind + "'");
  m.speed = num(n["speed"], m.speed, "speed");
  m.move_s = num(n["move_s"], m.move_s, "move_s");
  m.pause_s = num(n["pause_s"], m.pause_s, "pause_s");
  m.dart_rate = num(n["dart_rate"], m.dart_rate, "dart_rate");
  m.dart_impulse = num(n["dart_impulse"], m.dart_impulse, "dart_impulse");
  m.dart_decay_s = num(n["dart_decay_s"], m.dart_decay_s, "dart_decay_s");
  m.turn_noise = num(n["turn_noise"], m.turn_noise, "turn_noise");
  return m;
}

Sprite sprite(const toml::node_view<const toml::node>& n, Sprite s) {
  const Vec3 e = vec3(n["extent"], {s.extent.length, s.extent.width, s.extent.height}, "extent");
  s.extent = {e.x, e.y, e.z};
  s.texture_seed = static_cast<std::uint32_t>(n["texture_seed"].value_or<std::int64_t>(s.texture_seed));
  s.color_a = rgb(n["color_a"], s.color_a, "color_a");
  s.color_b = rgb(n["color_b"], s.color_b, "color_b");
  return s;
}

AnimalState start(const toml::node_view<const toml::node>& n) {
  AnimalState a;
  a.position = vec3(n["position"], a.position, "position");
  a.heading = num(n["heading_deg"], 0.0, "heading_deg") * kDeg;
  return a;
}

}  // namespace

void Scenario::validate() const {
  if (!(beta[0] >= beta[1] && beta[1] >= beta[2] && beta[2] >= 0.0))
    fail("water beta must satisfy red >= green >= blue >= 0");
  if (frame_rate < 10.0) fail("frame rate must be at least 10 Hz");
  if (!(duration > 0.0)) fail("duration must be positive");
  if (snow_density < 0.0) fail("snow density must be non-negative");
  if (!(seafloor_depth > 0.0)) fail("seafloor depth must be positive");
  if (bounds.x_min >= bounds.x_max || bounds.y_min >= bounds.y_max) fail("world bounds are empty");
  if (camera.width <= 0 || camera.height <= 0 || !(camera.focal > 0.0)) fail("camera intrinsics are invalid");
  auto check_motion = [](const MotionModel& m) {
    if (m.speed < 0 || m.dart_impulse < 0 || m.dart_rate < 0 || m.turn_noise < 0) fail("motion speeds must be >= 0");
    if (m.kind == MotionKind::StopAndGo && (m.move_s < 0 || m.pause_s < 0 || m.move_s + m.pause_s <= 0))
      fail("stop-and-go durations must be non-negative with a positive period");
    if (m.kind == MotionKind::Darting && !(m.dart_decay_s > 0)) fail("dart decay must be positive");
  };
  check_motion(motion);
  for (const auto& d : distractors) check_motion(d.motion);
  auto inside = [this](const AnimalState& a, const Extent& e) {
    return a.position.x >= bounds.x_min && a.position.x <= bounds.x_max && a.position.y >= bounds.y_min &&
           a.position.y <= bounds.y_max && animal_altitude(a, e, seafloor_depth) >= -1e-9;
  };
  if (!inside(animal_start, animal.extent)) fail("animal starts outside the world or below the seafloor");
  for (std::size_t i = 1; i < teleports.size(); ++i)
    if (teleports[i].t < teleports[i - 1].t) fail("teleports must be listed in time order");
  if (vehicle_start.position.z < 0 || vehicle_start.position.z > seafloor_depth)
    fail("vehicle starts outside the water column");
}

Scenario parse_scenario(const std::string& text) {
  toml::table doc;
  try {
    doc = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e.description() << " at line " << e.source().begin.line;
    fail(msg.str());
  }
  const toml::node_view<const toml::node> root{static_cast<const toml::node&>(doc)};
  Scenario s;
  s.id = root["id"].value_or(s.id);
  s.seed = static_cast<std::uint64_t>(root["seed"].value_or<std::int64_t>(1));
  s.duration = num(root["duration"], s.duration, "duration");
  s.frame_rate = num(root["frame_rate"], s.frame_rate, "frame_rate");
  s.seafloor_depth = num(root["seafloor_depth"], s.seafloor_depth, "seafloor_depth");
  s.snow_density = num(root["snow_density"], s.snow_density, "snow_density");
  s.snow_range = num(root["snow_range"], s.snow_range, "snow_range");
  const std::string bg = root["background"].value_or(std::string("seafloor"));
  if (bg == "seafloor") s.background = Background::Seafloor;
  else if (bg == "midwater") s.background = Background::Midwater;
  else fail("background must be \"seafloor\" or \"midwater\"");

  s.beta = triple(root["water"]["beta"], s.beta, "water.beta");
  s.water_color = rgb(root["water"]["color"], s.water_color, "water.color");

  std::tie(s.bounds.x_min, s.bounds.x_max) = range2(root["bounds"]["x"], {s.bounds.x_min, s.bounds.x_max}, "bounds.x");
  std::tie(s.bounds.y_min, s.bounds.y_max) = range2(root["bounds"]["y"], {s.bounds.y_min, s.bounds.y_max}, "bounds.y");

  auto cam = root["camera"];
  s.camera.width = static_cast<int>(cam["width"].value_or<std::int64_t>(s.camera.width));
  s.camera.height = static_cast<int>(cam["height"].value_or<std::int64_t>(s.camera.height));
  s.camera.focal = num(cam["focal"], s.camera.focal, "camera.focal");
  s.camera.cx = num(cam["cx"], 0.5 * s.camera.width, "camera.cx");
  s.camera.cy = num(cam["cy"], 0.5 * s.camera.height, "camera.cy");
  s.camera.tilt = num(cam["tilt_deg"], 30.0, "camera.tilt_deg") * kDeg;

  s.animal = sprite(root["animal"], s.animal);
  s.animal_start = start(root["animal"]);
  s.motion = motion(root["animal"]["motion"]);

  if (const auto* list = root["distractors"].as_array()) {
    for (const auto& item : *list) {
      const toml::node_view<const toml::node> d{item};
      Distractor dist;
      dist.sprite = sprite(d, Sprite{{0.5, 0.2, 0.2}, 31, {60, 160, 200}, {20, 40, 60}});
      dist.initial = start(d);
      dist.motion = motion(d["motion"]);
      s.distractors.push_back(dist);
    }
  }
  if (const auto* list = root["teleports"].as_array()) {
    for (const auto& item : *list) {
      const toml::node_view<const toml::node> t{item};
      s.teleports.push_back({num(t["t"], 0.0, "teleports.t"), vec3(t["offset"], {}, "teleports.offset")});
    }
  }

  auto veh = root["vehicle"];
  s.vehicle_start.position = vec3(veh["position"], {0, 0, 10}, "vehicle.position");
  s.vehicle_start.heading = num(veh["heading_deg"], 0.0, "vehicle.heading_deg") * kDeg;
  s.vehicle.max_surge = num(veh["max_surge"], s.vehicle.max_surge, "vehicle.max_surge");
  s.vehicle.max_sway = num(veh["max_sway"], s.vehicle.max_sway, "vehicle.max_sway");
  s.vehicle.max_heave = num(veh["max_heave"], s.vehicle.max_heave, "vehicle.max_heave");
  s.vehicle.max_yaw_rate = num(veh["max_yaw_rate"], s.vehicle.max_yaw_rate, "vehicle.max_yaw_rate");
  s.vehicle.tau = num(veh["tau"], s.vehicle.tau, "vehicle.tau");
  s.vehicle.seafloor_depth = s.seafloor_depth;

  auto sen = root["sensors"];
  s.sensors.velocity_sigma = num(sen["velocity_sigma"], 0.0, "sensors.velocity_sigma");
  s.sensors.depth_sigma = num(sen["depth_sigma"], 0.0, "sensors.depth_sigma");
  s.sensors.altitude_sigma = num(sen["altitude_sigma"], 0.0, "sensors.altitude_sigma");
  s.sensors.heading_sigma = num(sen["heading_sigma"], 0.0, "sensors.heading_sigma");
  s.sensors.heading_bias = num(sen["heading_bias_deg"], 0.0, "sensors.heading_bias_deg") * kDeg;

  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw SimError("cannot open " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Scenario s = parse_scenario(buf.str());
  if (s.id == "scenario") s.id = file.stem().string();
  return s;
}

}  // namespace reefloop::sim
