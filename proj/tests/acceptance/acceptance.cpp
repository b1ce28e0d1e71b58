// One PASS/FAIL line per primary acceptance criterion. Exit status is the
// number of failures.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "../support/oracles.hpp"
#include "../support/servo_loop.hpp"
#include "reefloop/session.hpp"

using namespace reefloop;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = REEFLOOP_SCENARIO_DIR;
const std::string kPeer = REEFLOOP_PEER_PATH;

// pinned tolerances
constexpr double kIouOracleTol = 1e-9;
constexpr double kMetricRuntimeS = 10.0;
constexpr double kInterpTol = 1e-12;
constexpr double kAverageTol = 1e-12;
constexpr double kDrTol = 1e-3;
constexpr double kDrRuntimeS = 5.0;
constexpr double kServoStartEx = 0.30;
constexpr double kServoEndEx = 0.05;
constexpr double kServoSettleS = 10.0;
constexpr double kFloorSlack = 0.05;
constexpr double kServoRuntimeS = 120.0;
constexpr double kFloorIou = 0.8;
constexpr double kClosedLoopRuntimeS = 180.0;
constexpr double kServoStepMs = 5.0;
constexpr double kMinTickHz = 9.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

sim::Scenario scenario(const std::string& name) { return sim::load_scenario(kScenarios / (name + ".toml")); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct ScratchDir {
  fs::path path;
  ScratchDir() {
    std::string tmpl = (fs::temp_directory_path() / "reefloop-accept-XXXXXX").string();
    path = ::mkdtemp(tmpl.data());
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

dataset::Track random_track(std::mt19937_64& rng, std::size_t n) {
  dataset::Track t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(testing::random_box(rng, 300, 80));
  return t;
}

std::vector<BBox> noisy_copy(std::mt19937_64& rng, const dataset::Track& gt) {
  std::normal_distribution<double> n(0.0, 10.0);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<BBox> out;
  for (const auto& g : gt)
    out.push_back(u(rng) < 0.05 ? BBox::empty()
                                : BBox{g.x + n(rng), g.y + n(rng), std::max(1.0, g.w + n(rng)), std::max(1.0, g.h + n(rng))});
  return out;
}

// ---------------------------------------------------------------------------

Outcome metric_oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const BBox a = testing::random_int_box(rng), b = testing::random_int_box(rng);
    worst = std::max(worst, std::abs(iou(a, b) - testing::raster_iou(a, b)));
  }
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto gt = random_track(rng, 80);
    metrics::TrackRun run;
    run.boxes = noisy_copy(rng, gt);
    const auto sc = metrics::success_curve(run, gt);
    const auto pc = metrics::precision_score(run, gt);
    std::vector<double> ious, dists;
    for (std::size_t t = 0; t < gt.size(); ++t) {
      ious.push_back(testing::longhand_iou(run.boxes[t], gt[t]));
      dists.push_back(testing::longhand_center_distance(run.boxes[t], gt[t]));
    }
    for (int i = 0; i <= 20; ++i)
      mismatches += sc.values[i] != testing::count_fraction(ious, [&](double v) { return v >= i / 20.0; });
    for (int d = 0; d <= 50; ++d)
      mismatches += pc.values[d] != testing::count_fraction(dists, [&](double v) { return v <= double(d); });
  }
  const double secs = seconds_since(t0);
  return {worst <= kIouOracleTol && mismatches == 0 && secs < kMetricRuntimeS,
          fmt("max |IoU - raster| = %.3g over 1000 pairs; %zu curve mismatches over 50 runs; %.2f s", worst,
              mismatches, secs)};
}

Outcome metric_identities() {
  std::mt19937_64 rng(7);
  std::vector<dataset::SequenceRecord> seqs;
  std::vector<metrics::TrackRun> runs;
  for (int s = 0; s < 4; ++s) {
    dataset::SequenceRecord rec;
    rec.id = "seq" + std::to_string(s);
    rec.resolution = {854, 480};
    rec.track = random_track(rng, 50 + 10 * s);
    seqs.push_back(rec);
    metrics::TrackRun oracle, empty;
    oracle.sequence_id = empty.sequence_id = rec.id;
    oracle.tracker_id = "oracle";
    empty.tracker_id = "empty";
    oracle.boxes = rec.track;
    empty.boxes.assign(rec.track.size(), BBox::empty());
    runs.push_back(oracle);
    runs.push_back(empty);
  }
  const auto report = metrics::evaluate(seqs, runs);
  const metrics::Scores* o = nullptr;
  const metrics::Scores* e = nullptr;
  for (const auto& t : report.trackers) (t.tracker_id == "oracle" ? o : e) = &t.overall;
  const bool pass = o && e && o->success_auc == 1.0 && o->precision_20px == 1.0 && o->norm_precision_auc == 1.0 &&
                    e->success_auc == 1.0 / 21.0 && e->precision_20px == 0.0;
  return {pass, fmt("oracle AUC %.17g prec %.17g nprec %.17g; empty AUC %.17g (1/21 = %.17g) prec %.17g",
                    o ? o->success_auc : -1, o ? o->precision_20px : -1, o ? o->norm_precision_auc : -1,
                    e ? e->success_auc : -1, 1.0 / 21.0, e ? e->precision_20px : -1)};
}

Outcome attribute_engine() {
  struct Case {
    const char* id;
    dataset::Track track;
    dataset::AutoAttributes expect;
  };
  // hand-computed: areas and aspect ratios relative to the first frame
  const std::vector<Case> cases = {
      {"area-exactly-1000", {{0, 0, 50, 20}, {5, 5, 50, 20}}, {false, false, false}},
      {"ratios-exactly-2", {{0, 0, 100, 100}, {0, 0, 200, 100}}, {false, false, false}},
      {"ratios-exactly-half", {{0, 0, 100, 100}, {0, 0, 50, 100}}, {false, false, false}},
      {"shrinks-to-0.49", {{0, 0, 100, 100}, {0, 0, 90, 90}, {0, 0, 70, 70}}, {true, false, false}},
      {"aspect-2.5", {{0, 0, 100, 100}, {0, 0, 150, 60}}, {false, true, false}},
      {"area-980", {{0, 0, 50, 20}, {0, 0, 49, 20}}, {false, false, true}},
  };
  std::string bad;
  for (const auto& c : cases) {
    const auto got = dataset::compute_auto_attributes(c.track);
    if (!(got == c.expect)) bad += std::string(bad.empty() ? "" : ", ") + c.id;
  }
  return {bad.empty(), bad.empty() ? "6/6 fixture sequences match the hand-computed SV/ARC/LR flags"
                                   : "mismatch on " + bad};
}

Outcome interpolation_fidelity() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> gap(1, 15);
  std::uniform_real_distribution<double> coord(0, 800), size(2, 200);
  double worst = 0.0;
  std::size_t key_mismatch = 0, frames = 0;
  for (int trial = 0; trial < 200; ++trial) {
    dataset::KeyframeTrack keys;
    std::size_t f = 0;
    for (int k = 0; k < 20; ++k) {
      keys.push_back({f, {coord(rng), coord(rng), size(rng), size(rng)}});
      f += gap(rng);
    }
    const std::size_t n = keys.back().frame + 1;
    const auto dense = dataset::interpolate_track(keys, n);
    for (const auto& k : keys) key_mismatch += !(dense[k.frame] == k.box);
    for (std::size_t k = 0; k + 1 < keys.size(); ++k) {
      const auto& [i, a] = keys[k];
      const auto& [j, b] = keys[k + 1];
      for (std::size_t m = i + 1; m < j; ++m) {
        const double t = double(m - i) / double(j - i);
        const double ref[4] = {(1 - t) * a.x + t * b.x, (1 - t) * a.y + t * b.y, (1 - t) * a.w + t * b.w,
                               (1 - t) * a.h + t * b.h};
        const double got[4] = {dense[m].x, dense[m].y, dense[m].w, dense[m].h};
        for (int q = 0; q < 4; ++q) worst = std::max(worst, std::abs(got[q] - ref[q]) / std::max(1.0, std::abs(ref[q])));
        ++frames;
      }
    }
  }
  return {key_mismatch == 0 && worst <= kInterpTol,
          fmt("%zu keyframe mismatches; max relative convex-combination error %.3g over %zu frames", key_mismatch,
              worst, frames)};
}

Outcome run_averaging() {
  ScratchDir tmp;
  auto sc = scenario("reference_swim");
  sc.duration = 3.0;
  session::export_sequence(sc, tmp.path);
  const auto seqs = dataset::load_dataset(tmp.path).sequences;
  auto spec = session::parse_tracker_spec("bridge:stdio:" + kPeer + " --jitter 4 --seed 5");
  spec.timeout_ms = 5000;
  const auto res = session::run_benchmark(seqs, spec);
  if (res.completed.size() != 5) return {false, fmt("%zu of 5 runs completed", res.completed.size())};

  const auto& gt = seqs[0].track;
  std::vector<metrics::Scores> singles;
  for (const auto& rec : res.completed) singles.push_back(metrics::score_run(rec.runs[0], gt));
  const auto& agg = res.report.trackers[0].per_sequence.at(seqs[0].id);
  double worst = 0.0;
  auto compare = [&](const std::vector<double>& got, auto member) {
    for (std::size_t i = 0; i < got.size(); ++i) {
      double mean = 0.0;
      for (const auto& s : singles) mean += (s.*member)[i];
      worst = std::max(worst, std::abs(got[i] - mean / singles.size()));
    }
  };
  compare(agg.success, &metrics::Scores::success);
  compare(agg.precision, &metrics::Scores::precision);
  compare(agg.norm_precision, &metrics::Scores::norm_precision);
  bool distinct = false;
  for (const auto& rec : res.completed) distinct |= rec.runs[0].boxes != res.completed[0].runs[0].boxes;
  return {distinct && worst <= kAverageTol,
          fmt("5 bridged jittered runs (%s); max |aggregate - pointwise mean| = %.3g", distinct ? "distinct" : "identical",
              worst)};
}

Outcome dead_reckoning_closure() {
  const auto t0 = Clock::now();
  auto fly = [](double duration, double dt, const nav::SensorNoise& noise, double rotate, double* path) {
    nav::VehicleState s;
    s.position = {0, 0, 5};
    std::mt19937_64 rng(1);
    nav::NavEstimate est;
    double worst = 0.0;
    Vec3 prev = s.position;
    const int steps = static_cast<int>(std::lround(duration / dt));
    for (int k = 0; k <= steps; ++k) {
      const double t = k * dt;
      est = nav::dead_reckon(est, nav::sense(s, t, noise, 20.0, rng));
      const Vec3 r = nav::body_to_world(s.position, rotate);
      worst = std::max(worst, std::hypot(r.x - est.position.x, r.y - est.position.y));
      if (path) *path += std::hypot(s.position.x - prev.x, s.position.y - prev.y);
      prev = s.position;
      s = nav::step_vehicle(s, {0.6, 0.0, 0.0, std::sin(2 * std::numbers::pi * t / 30.0)}, dt);
    }
    return worst;
  };
  const double closure = fly(60.0, 0.01, {}, 0.0, nullptr);
  nav::SensorNoise biased;
  biased.heading_bias = 10.0 * std::numbers::pi / 180.0;
  double path = 0.0;
  const double rotated = fly(180.0, 0.01, biased, biased.heading_bias, &path);
  const double secs = seconds_since(t0);
  return {closure <= kDrTol && rotated <= kDrTol && path >= 100.0 && secs < kDrRuntimeS,
          fmt("figure-eight 60 s closure %.3g m; 10 deg bias vs rotated truth %.3g m over %.0f m; %.2f s", closure,
              rotated, path, secs)};
}

sim::Scenario static_target(double ex0) {
  sim::Scenario sc;
  sc.background = sim::Background::Midwater;
  sc.motion.speed = 0.0;
  sc.vehicle_start.position = {0, 0, 8};
  const double Z = 5.0, X = ex0 * sc.camera.width / sc.camera.focal * Z;
  const double t = sc.camera.tilt;
  sc.animal_start.position = sc.vehicle_start.position + Vec3{std::cos(t), 0, std::sin(t)} * Z + Vec3{0, X, 0};
  sc.animal_start.heading = 1.3;
  return sc;
}

Outcome servo_convergence_and_safety() {
  const auto t0 = Clock::now();
  testing::LoopSetup setup;
  setup.scenario = static_target(kServoStartEx);
  setup.duration = kServoSettleS;
  const auto trace = testing::run_servo_loop(setup);
  const double ex_start = trace.front().ex, ex_end = trace.back().ex;
  const bool converged = std::abs(ex_start - kServoStartEx) < 0.01 && std::abs(ex_end) <= kServoEndEx;

  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_margin = 1e9, worst_cmd = 0.0;
  for (int ep = 0; ep < 100; ++ep) {
    testing::LoopSetup s;
    sim::Scenario& sc = s.scenario;
    sc.seed = 1000 + ep;
    sc.seafloor_depth = 8.0 + 12.0 * u(rng);
    sc.vehicle.seafloor_depth = sc.seafloor_depth;
    sc.vehicle_start.position = {0, 0, 2.0 + (sc.seafloor_depth - 3.0) * u(rng)};
    sc.vehicle_start.heading = 2 * std::numbers::pi * u(rng);
    const double range = 3.0 + 5.0 * u(rng);
    const double depth = std::min(sc.seafloor_depth - 0.2, sc.vehicle_start.position.z + range * (0.2 + 0.6 * u(rng)));
    const double h = sc.vehicle_start.heading + 0.3 * (u(rng) - 0.5);
    sc.animal_start.position = {range * std::cos(h), range * std::sin(h), depth};
    sc.animal_start.heading = 2 * std::numbers::pi * u(rng);
    const int kind = static_cast<int>(u(rng) * 4);
    sc.motion.kind = kind == 0 ? sim::MotionKind::ConstantSwim
                     : kind == 1 ? sim::MotionKind::Crawl
                     : kind == 2 ? sim::MotionKind::StopAndGo
                                 : sim::MotionKind::Darting;
    if (sc.motion.kind == sim::MotionKind::Crawl) sc.animal_start.position.z = sc.seafloor_depth - 0.125;
    sc.motion.speed = 0.1 + 0.6 * u(rng);
    sc.motion.dart_rate = 0.3;
    sc.motion.turn_noise = 0.2 * u(rng);
    s.servo.reference_width = 30.0 + 120.0 * u(rng);
    s.duration = 30.0;
    // a third of the episodes have an operator pushing down hard for a while
    if (u(rng) < 1.0 / 3.0) {
      const double from = 20.0 * u(rng);
      s.operator_hook = [from](double t, servo::ServoController& c) {
        if (std::abs(t - from) < 1e-9) {
          c.handle(servo::Event::Override);
          c.set_manual_command({1.0, 0.5, -1.0, -1.0});
        }
        if (std::abs(t - from - 5.0) < 1e-9) c.handle(servo::Event::Release);
      };
    }
    for (const auto& smp : testing::run_servo_loop(s)) {
      worst_margin = std::min(worst_margin, smp.altitude - (s.servo.altitude_floor - kFloorSlack));
      for (double v : {smp.cmd.surge, smp.cmd.sway, smp.cmd.heave, smp.cmd.yaw})
        worst_cmd = std::max(worst_cmd, std::abs(v));
    }
  }
  const double secs = seconds_since(t0);
  return {converged && worst_margin >= 0.0 && worst_cmd <= 1.0 && secs < kServoRuntimeS,
          fmt("|e_x| %.3f -> %.4f in %.0f s; 100 episodes: min altitude above floor-0.05 by %.3f m, max |cmd| %.3f; "
              "%.1f s",
              std::abs(ex_start), std::abs(ex_end), kServoSettleS, worst_margin, worst_cmd, secs)};
}

session::EpisodeOptions ncc_options() {
  session::EpisodeOptions o;
  o.tracker = session::parse_tracker_spec("ncc");
  return o;
}

Outcome closed_loop_floor() {
  const auto t0 = Clock::now();
  const auto ref = session::run_episode(scenario("reference_swim"), ncc_options());
  const auto tel = session::run_episode(scenario("teleport"), ncc_options());
  const double secs = seconds_since(t0);
  const auto& r = ref.summary;
  const bool pass = r.duration >= 60.0 - 1e-9 && r.mean_iou >= kFloorIou && r.track_losses == 0 &&
                    tel.summary.track_losses >= 1 && !tel.interventions.empty() && secs < kClosedLoopRuntimeS;
  return {pass, fmt("reference: %.0f s, mean IoU %.3f, %zu losses, %.1f%% autonomous; teleport: %zu losses, "
                    "%zu intervals (first %.1f-%.1f s); %.1f s",
                    r.duration, r.mean_iou, r.track_losses, 100 * r.autonomous_fraction, tel.summary.track_losses,
                    tel.interventions.size(), tel.interventions.empty() ? 0.0 : tel.interventions[0].start,
                    tel.interventions.empty() ? 0.0 : tel.interventions[0].end, secs)};
}

Outcome occlusion_dichotomy() {
  auto run = [] {
    const auto sc = scenario("occluder");
    sim::World world(sc);
    const auto pose = sc.vehicle_start.pose();
    tracking::NccTracker fixed(tracking::TrackerConfig::fixed_template());
    tracking::NccTracker online(tracking::TrackerConfig::online(0.1));
    const double dt = 1.0 / sc.frame_rate;
    const auto n = static_cast<int>(std::lround(sc.duration * sc.frame_rate));
    std::vector<float> fixed0, online0;
    double during = 0, post = 0;
    int n_during = 0, n_post = 0;
    bool seen_occlusion = false;
    for (int k = 0; k < n; ++k) {
      if (k > 0) world.step(dt);
      const Frame f = sim::render_frame(sc, pose, world.animal(), world.distractors(), sc.seed + k, k * dt);
      const auto gt = sim::gt_bbox(sc.camera, pose, world.animal(), sc.animal.extent);
      const auto occ = sim::gt_bbox(sc.camera, pose, world.distractors()[0], sc.distractors[0].sprite.extent);
      if (!gt) throw std::runtime_error("animal left the view");
      if (k == 0) {
        fixed.init(f, *gt);
        online.init(f, *gt);
        fixed0 = fixed.template_snapshot();
        online0 = online.template_snapshot();
        continue;
      }
      const double v = iou(fixed.track(f).box, *gt);
      online.track(f);
      const bool occluded = occ && iou(*gt, *occ) > 0.0;
      if (occluded) {
        seen_occlusion = true;
        during += v;
        ++n_during;
      } else if (seen_occlusion) {
        post += v;
        ++n_post;
      }
    }
    return std::tuple{n_during ? during / n_during : -1.0, n_post ? post / n_post : -1.0,
                      tracking::template_distance(fixed0, fixed.template_snapshot()),
                      tracking::template_distance(online0, online.template_snapshot()), n_during, n_post};
  };
  const auto a = run();
  const auto b = run();
  const auto [during, post, fixed_drift, online_drift, n_during, n_post] = a;
  const bool pass = a == b && n_during > 0 && n_post > 0 && post > during && fixed_drift == 0.0 &&
                    online_drift > fixed_drift;
  return {pass, fmt("fixed IoU during %.3f (%d frames) -> post %.3f (%d frames); drift fixed %.3g, online %.3g; "
                    "repeat run %s",
                    during, n_during, post, n_post, fixed_drift, online_drift, a == b ? "identical" : "differs")};
}

Outcome loop_rate() {
  servo::ServoController c;
  c.init_box({140, 100, 40, 40});
  nav::SensorPacket pk;
  pk.dvl_altitude = 5.0;
  servo::TrackReport rep{BBox{140, 100, 40, 40}, 0.9, true};
  double worst_servo_ms = 0.0;
  for (int k = 0; k < 2000; ++k) {
    rep.box->x = 100 + k % 60;
    const auto t0 = Clock::now();
    c.step(rep, pk, 320, 240, 0.1);
    worst_servo_ms = std::max(worst_servo_ms, 1000.0 * seconds_since(t0));
  }

  session::EpisodeRunner runner(scenario("reference_swim"), ncc_options());
  session::ScriptedOperator op;
  std::vector<double> tick_s;
  while (!runner.done() && tick_s.size() < 300) {
    const auto t0 = Clock::now();
    runner.tick(op);
    tick_s.push_back(seconds_since(t0));
  }
  const double mean = std::accumulate(tick_s.begin(), tick_s.end(), 0.0) / tick_s.size();
  std::vector<double> sorted = tick_s;
  std::sort(sorted.begin(), sorted.end());
  const double p95 = sorted[sorted.size() * 95 / 100];
  return {worst_servo_ms < kServoStepMs && 1.0 / mean >= kMinTickHz && 1.0 / p95 >= kMinTickHz,
          fmt("servo step worst %.4f ms; full tick mean %.2f ms (%.0f Hz), p95 %.2f ms (%.0f Hz) over %zu ticks",
              worst_servo_ms, 1000 * mean, 1.0 / mean, 1000 * p95, 1.0 / p95, tick_s.size())};
}

Outcome determinism_and_persistence() {
  const auto sc = scenario("teleport");
  const auto a = session::run_episode(sc, ncc_options());
  const auto b = session::run_episode(sc, ncc_options());
  ScratchDir tmp;
  session::save_episode(tmp.path / "a", a);
  session::save_episode(tmp.path / "b", b);
  const auto back = session::load_episode(tmp.path / "a");
  const bool same_bytes = slurp(tmp.path / "a" / "log.jsonl") == slurp(tmp.path / "b" / "log.jsonl") &&
                          slurp(tmp.path / "a" / "summary.json") == slurp(tmp.path / "b" / "summary.json");
  return {a == b && back == a && same_bytes,
          fmt("two %zu-tick runs %s; files %s; reload %s", a.ticks.size(), a == b ? "identical" : "differ",
              same_bytes ? "byte-identical" : "differ", back == a ? "exact" : "differs")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"metric-oracle-equivalence", metric_oracle_equivalence},
      {"metric-identities", metric_identities},
      {"attribute-engine", attribute_engine},
      {"interpolation-fidelity", interpolation_fidelity},
      {"run-averaging", run_averaging},
      {"dead-reckoning-closure", dead_reckoning_closure},
      {"servo-convergence-and-safety", servo_convergence_and_safety},
      {"closed-loop-floor", closed_loop_floor},
      {"occlusion-dichotomy", occlusion_dichotomy},
      {"loop-rate", loop_rate},
      {"determinism-and-persistence", determinism_and_persistence},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
