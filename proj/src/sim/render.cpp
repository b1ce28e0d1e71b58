#include <algorithm>
#include <cmath>
#include <limits>

#include "reefloop/sim.hpp"

namespace reefloop::sim {

namespace {

constexpr float kFar = std::numeric_limits<float>::infinity();

std::uint32_t hash3(std::int64_t a, std::int64_t b, std::uint32_t seed) {
  std::uint32_t h = static_cast<std::uint32_t>(a) * 374761393u + static_cast<std::uint32_t>(b) * 668265263u +
                    seed * 2246822519u;
  h = (h ^ (h >> 13)) * 1274126177u;
  return h ^ (h >> 16);
}

double unit_hash(std::int64_t a, std::int64_t b, std::uint32_t seed) { return (hash3(a, b, seed) & 0xffff) / 65535.0; }

struct Canvas {
  int w, h;
  std::vector<float> rgb;    // linear 0..255
  std::vector<float> range;  // meters along the ray, inf = open water

  Canvas(int w_, int h_) : w(w_), h(h_), rgb(std::size_t(w_) * h_ * 3, 0.0f), range(std::size_t(w_) * h_, kFar) {}

  void put(int x, int y, float r, const std::array<double, 3>& c) {
    const std::size_t i = std::size_t(y) * w + x;
    if (r >= range[i]) return;
    range[i] = r;
    rgb[3 * i] = float(c[0]);
    rgb[3 * i + 1] = float(c[1]);
    rgb[3 * i + 2] = float(c[2]);
  }
};

std::array<double, 3> floor_color(double x, double y, std::uint32_t seed) {
  const double coarse = unit_hash(std::int64_t(std::floor(x / 0.5)), std::int64_t(std::floor(y / 0.5)), seed);
  const double fine = unit_hash(std::int64_t(std::floor(x / 0.1)), std::int64_t(std::floor(y / 0.1)), seed + 1);
  const double k = 0.45 + 0.4 * coarse + 0.15 * fine;
  return {170 * k, 150 * k, 110 * k};
}

std::array<double, 3> sprite_color(const Sprite& sp, double s, double t) {
  const auto cell = hash3(std::int64_t(s * 6), std::int64_t(t * 4), sp.texture_seed);
  const auto& base = (cell & 0x80) ? sp.color_a : sp.color_b;
  const double shade = 0.75 + 0.25 * ((cell >> 8) & 0xff) / 255.0;
  return {base[0] * shade, base[1] * shade, base[2] * shade};
}

void draw_seafloor(Canvas& cv, const Scenario& sc, const nav::Pose& pose) {
  const auto& cam = sc.camera;
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  const double ct = std::cos(cam.tilt), st = std::sin(cam.tilt);
  const double drop = sc.seafloor_depth - pose.position.z;
  const auto seed = static_cast<std::uint32_t>(sc.seed);
  for (int py = 0; py < cv.h; ++py) {
    const double Y = (py + 0.5 - cam.cy) / cam.focal;
    const double xb = ct - st * Y;
    const double zb = st + ct * Y;
    if (zb <= 0.0) continue;  // ray never reaches the floor
    const double t = drop / zb;
    for (int px = 0; px < cv.w; ++px) {
      const double X = (px + 0.5 - cam.cx) / cam.focal;
      const double wx = pose.position.x + t * (c * xb - s * X);
      const double wy = pose.position.y + t * (s * xb + c * X);
      const double range = t * std::sqrt(1.0 + X * X + Y * Y);
      cv.put(px, py, float(range), floor_color(wx, wy, seed));
    }
  }
}

void draw_sprite(Canvas& cv, const Scenario& sc, const nav::Pose& pose, const Sprite& sp, const AnimalState& a) {
  const auto hull = projected_hull(sc.camera, pose, a, sp.extent);
  if (!hull || !hull->valid()) return;
  const float range = float((a.position - pose.position).norm());
  const int x0 = std::max(0, int(std::floor(hull->x)));
  const int x1 = std::min(cv.w - 1, int(std::ceil(hull->right())));
  const int y0 = std::max(0, int(std::floor(hull->y)));
  const int y1 = std::min(cv.h - 1, int(std::ceil(hull->bottom())));
  for (int py = y0; py <= y1; ++py) {
    const double t = (py + 0.5 - hull->y) / hull->h;
    for (int px = x0; px <= x1; ++px) {
      const double s = (px + 0.5 - hull->x) / hull->w;
      const double ds = s - 0.5, dt = t - 0.5;
      if (ds * ds + dt * dt > 0.25) continue;
      cv.put(px, py, range, sprite_color(sp, s, t));
    }
  }
}

void draw_snow(Canvas& cv, const Scenario& sc, std::uint64_t frame_seed) {
  if (sc.snow_density <= 0.0) return;
  const auto& cam = sc.camera;
  const double R = sc.snow_range;
  const double half_w = 0.5 * cam.width / cam.focal;
  const double half_h = 0.5 * cam.height / cam.focal;
  const double volume = R * R * R * (2 * half_w) * (2 * half_h) / 3.0;
  const auto count = static_cast<long>(std::llround(sc.snow_density * volume));
  std::mt19937_64 rng(frame_seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const std::array<double, 3> white{235, 235, 225};
  for (long i = 0; i < count; ++i) {
    const double z = R * std::cbrt(uni(rng));  // uniform in the pyramid volume
    const double x = (2 * uni(rng) - 1) * half_w * z;
    const double y = (2 * uni(rng) - 1) * half_h * z;
    if (z < 0.2) continue;
    const int u = int(std::floor(cam.cx + cam.focal * x / z));
    const int v = int(std::floor(cam.cy + cam.focal * y / z));
    const int size = z < 1.5 ? 3 : (z < 4.0 ? 2 : 1);
    const float range = float(std::sqrt(x * x + y * y + z * z));
    for (int dy = 0; dy < size; ++dy)
      for (int dx = 0; dx < size; ++dx) {
        const int px = u + dx, py = v + dy;
        if (px >= 0 && py >= 0 && px < cv.w && py < cv.h) cv.put(px, py, range, white);
      }
  }
}

}  // namespace

Frame render_frame(const Scenario& sc, const nav::Pose& pose, const AnimalState& animal,
                   const std::vector<AnimalState>& distractors, std::uint64_t frame_seed, double timestamp) {
  const auto& cam = sc.camera;
  Canvas cv(cam.width, cam.height);
  if (sc.background == Background::Seafloor) draw_seafloor(cv, sc, pose);
  // the depth test makes draw order irrelevant
  for (std::size_t i = 0; i < distractors.size() && i < sc.distractors.size(); ++i)
    draw_sprite(cv, sc, pose, sc.distractors[i].sprite, distractors[i]);
  draw_sprite(cv, sc, pose, sc.animal, animal);
  draw_snow(cv, sc, frame_seed);

  Frame out(cam.width, cam.height, 3, timestamp);
  for (std::size_t i = 0; i < cv.range.size(); ++i) {
    const float r = cv.range[i];
    for (int ch = 0; ch < 3; ++ch) {
      const double water = sc.water_color[ch];
      double v = water;
      if (r < kFar) {
        const double keep = transmission(sc.beta[ch], r);
        v = cv.rgb[3 * i + ch] * keep + water * (1.0 - keep);
      }
      out.pixels[3 * i + ch] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

}  // namespace reefloop::sim
