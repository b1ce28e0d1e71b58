#include <algorithm>
#include <cmath>
#include <numbers>

#include "reefloop/sim.hpp"

namespace reefloop::sim {

namespace {

double reflect(double v, double lo, double hi, bool& flipped) {
  flipped = false;
  if (v < lo) {
    flipped = true;
    return std::min(hi, 2 * lo - v);
  }
  if (v > hi) {
    flipped = true;
    return std::max(lo, 2 * hi - v);
  }
  return v;
}

}  // namespace

double animal_altitude(const AnimalState& a, const Extent& e, double seafloor_depth) {
  return seafloor_depth - (a.position.z + 0.5 * e.height);
}

AnimalState step_animal(const AnimalState& s, const MotionModel& m, double dt, std::mt19937_64& rng,
                        const Extent& extent, const WorldBounds& bounds, double seafloor_depth) {
  if (!(dt > 0.0 && dt <= 0.2)) throw SimError("animal step dt must lie in (0, 0.2] s");
  AnimalState n = s;
  if (m.turn_noise > 0.0) n.heading += std::normal_distribution<double>(0.0, m.turn_noise * std::sqrt(dt))(rng);

  double speed = m.speed;
  switch (m.kind) {
    case MotionKind::ConstantSwim:
    case MotionKind::Crawl:
      break;
    case MotionKind::StopAndGo: {
      // phase judged at the step midpoint so boundaries don't depend on rounding
      const double mid = s.clock + 0.5 * dt;
      if (std::fmod(mid, m.move_s + m.pause_s) >= m.move_s) speed = 0.0;
      break;
    }
    case MotionKind::Darting: {
      n.dart = s.dart * std::exp(-dt / m.dart_decay_s);
      if (m.dart_rate > 0.0) {
        const int kicks = std::poisson_distribution<int>(m.dart_rate * dt)(rng);
        n.dart += kicks * m.dart_impulse;
      }
      speed += n.dart;
      break;
    }
  }

  n.velocity = {speed * std::cos(n.heading), speed * std::sin(n.heading), 0.0};
  n.position = s.position + n.velocity * dt;

  bool fx = false, fy = false;
  n.position.x = reflect(n.position.x, bounds.x_min, bounds.x_max, fx);
  n.position.y = reflect(n.position.y, bounds.y_min, bounds.y_max, fy);
  if (fx) n.heading = std::numbers::pi - n.heading;
  if (fy) n.heading = -n.heading;
  if (fx || fy) n.velocity = {speed * std::cos(n.heading), speed * std::sin(n.heading), 0.0};

  const double bottom = seafloor_depth - 0.5 * extent.height;
  if (m.kind == MotionKind::Crawl)
    n.position.z = bottom;
  else
    n.position.z = std::clamp(n.position.z, 0.5 * extent.height, bottom);
  n.clock = s.clock + dt;
  return n;
}

World::World(const Scenario& sc) : sc_(sc), animal_(sc.animal_start) {
  sc_.validate();
  for (std::size_t i = 0; i <= sc_.distractors.size(); ++i) rngs_.emplace_back(sc_.seed * 1000003u + i);
  for (const auto& d : sc_.distractors) distractors_.push_back(d.initial);
}

void World::step(double dt) {
  animal_ = step_animal(animal_, sc_.motion, dt, rngs_[0], sc_.animal.extent, sc_.bounds, sc_.seafloor_depth);
  for (std::size_t i = 0; i < distractors_.size(); ++i) {
    const auto& d = sc_.distractors[i];
    distractors_[i] =
        step_animal(distractors_[i], d.motion, dt, rngs_[i + 1], d.sprite.extent, sc_.bounds, sc_.seafloor_depth);
  }
  t_ += dt;
  while (next_teleport_ < sc_.teleports.size() && sc_.teleports[next_teleport_].t <= t_ + 1e-9) {
    animal_.position = animal_.position + sc_.teleports[next_teleport_].offset;
    ++next_teleport_;
  }
}

}  // namespace reefloop::sim
