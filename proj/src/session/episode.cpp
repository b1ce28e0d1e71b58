#include <cmath>
#include <fstream>

#include <json.hpp>

#include "reefloop/bridge.hpp"
#include "reefloop/image.hpp"
#include "reefloop/session.hpp"
#include "reefloop/text.hpp"

namespace reefloop::session {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Reads the episode's current ground truth instead of pixels.
class OracleTracker final : public tracking::Tracker {
 public:
  explicit OracleTracker(const std::optional<BBox>* gt) : gt_(gt) {}
  std::string name() const override { return "oracle"; }
  void init(const Frame&, const BBox&) override {}
  tracking::TrackerOutput track(const Frame&) override {
    tracking::TrackerOutput out;
    if (*gt_) {
      out.box = **gt_;
      out.confidence = 1.0;
    }
    return out;
  }

 private:
  const std::optional<BBox>* gt_;
};

std::size_t tick_total(const sim::Scenario& sc, const EpisodeOptions& o) {
  const double duration = o.duration.value_or(sc.duration);
  if (!(duration > 0.0)) throw SessionError("episode duration must be positive");
  return static_cast<std::size_t>(std::llround(duration * o.tick_hz));
}

const EpisodeOptions& checked(const EpisodeOptions& o) {
  if (!(o.tick_hz >= 9.0))
    throw SessionError("tick rate " + text::format_double(o.tick_hz) + " Hz is below the 9 Hz control minimum");
  return o;
}

}  // namespace

std::string_view operator_event_name(OperatorEvent::Kind k) {
  switch (k) {
    case OperatorEvent::Kind::InitBox: return "init_box";
    case OperatorEvent::Kind::Override: return "override";
    case OperatorEvent::Kind::Release: return "release";
    case OperatorEvent::Kind::Reinit: return "reinit";
  }
  return "?";
}

std::vector<OperatorEvent> ScriptedOperator::operator()(const OperatorView& view) {
  if (!view.ever_initialized) {
    if (view.gt) return {{OperatorEvent::Kind::InitBox, view.gt, {}}};
    return {};
  }
  if (view.mode != servo::Mode::Manual) {
    manual_since_.reset();
    return {};
  }
  if (!manual_since_) manual_since_ = view.t;
  if (view.t - *manual_since_ >= reinit_after_s_ - 1e-9 && view.gt) {
    manual_since_.reset();
    return {{OperatorEvent::Kind::Reinit, view.gt, {}}};
  }
  return {};
}

// ---- runner -----------------------------------------------------------------

EpisodeRunner::EpisodeRunner(const sim::Scenario& scenario, EpisodeOptions options)
    : sc_(scenario),
      options_(checked(options)),
      total_ticks_(tick_total(scenario, options)),
      world_((sc_.validate(), sc_)),
      vehicle_(sc_.vehicle_start),
      ctl_(options_.servo),
      sensor_rng_(sc_.seed * 0x9E3779B97F4A7C15ull + 0x5e25) {
  nav_.position = vehicle_.position;
  nav_.heading = vehicle_.heading;
  log_.scenario_id = sc_.id;
  log_.seed = sc_.seed;
  log_.tracker = options_.tracker.text.empty() ? "ncc" : options_.tracker.text;
  log_.tick_hz = options_.tick_hz;
  log_.ticks.reserve(total_ticks_);
}

EpisodeRunner::~EpisodeRunner() {
  if (auto* b = dynamic_cast<bridge::BridgedTracker*>(tracker_.get())) {
    try {
      b->close();
    } catch (...) {
    }
  }
}

bool EpisodeRunner::done() const { return log_.ticks.size() >= total_ticks_; }
std::size_t EpisodeRunner::tick_count() const { return total_ticks_; }

void EpisodeRunner::start_tracker(const BBox& box, TickRecord& rec) {
  last_box_ = box;
  try {
    if (!tracker_) {
      if (options_.tracker.kind == TrackerSpec::Kind::Oracle)
        tracker_ = std::make_unique<OracleTracker>(&gt_);
      else
        tracker_ = make_tracker(options_.tracker);
    }
    tracker_->init(frame_, box);
    tracker_fresh_ = true;
  } catch (const tracking::TrackerError&) {
    tracker_.reset();
    tracker_fresh_ = false;
    rec.tracker.failed = true;
  }
}

void EpisodeRunner::apply(const OperatorEvent& e, TickRecord& rec) {
  switch (e.kind) {
    case OperatorEvent::Kind::InitBox:
      if (!e.box || !e.box->valid()) return;
      ever_initialized_ = true;
      ctl_.init_box(*e.box);
      start_tracker(*e.box, rec);
      break;
    case OperatorEvent::Kind::Reinit: {
      const auto box = e.box ? e.box : last_box_;
      if (!box || !box->valid()) return;
      ever_initialized_ = true;
      ctl_.handle(servo::Event::Reinit);
      start_tracker(*box, rec);
      break;
    }
    case OperatorEvent::Kind::Override:
      ctl_.handle(servo::Event::Override);
      ctl_.set_manual_command(e.command);
      break;
    case OperatorEvent::Kind::Release:
      ctl_.handle(servo::Event::Release);
      break;
  }
}

const TickRecord& EpisodeRunner::tick(const OperatorFn& op) {
  if (done()) throw SessionError("episode already finished");
  const std::size_t k = log_.ticks.size();
  const double dt = 1.0 / options_.tick_hz;
  const double t = static_cast<double>(k) / options_.tick_hz;
  if (k > 0) {
    world_.step(dt);
    vehicle_ = nav::step_vehicle(vehicle_, last_cmd_, dt, sc_.vehicle);
  }

  log_.ticks.emplace_back();
  TickRecord& rec = log_.ticks.back();
  rec.index = k;
  rec.t = t;
  rec.animal = world_.animal();
  rec.vehicle = vehicle_;
  rec.sensors = nav::sense(vehicle_, t, sc_.sensors, sc_.seafloor_depth, sensor_rng_);
  nav_ = nav::dead_reckon(nav_, rec.sensors);
  rec.nav_position = nav_.position;
  rec.nav_heading = nav_.heading;
  frame_ = sim::render_frame(sc_, vehicle_.pose(), world_.animal(), world_.distractors(),
                             sc_.seed * 6364136223846793005ull + k, t);
  rec.gt = gt_ = sim::gt_bbox(sc_.camera, vehicle_.pose(), world_.animal(), sc_.animal.extent);

  if (op) {
    OperatorView view{t, ctl_.mode(), rec.gt, last_box_, ever_initialized_};
    rec.events = op(view);
    for (const auto& e : rec.events) apply(e, rec);
  }

  TrackerSample& s = rec.tracker;
  if (tracker_fresh_) {
    // the init frame itself: the tracker has not produced anything yet
    tracker_fresh_ = false;
    s.box = last_box_;
    s.confidence = 1.0;
  } else if (tracker_) {
    try {
      const auto out = tracker_->track(frame_);
      if (out.box.valid()) s.box = out.box;
      s.confidence = out.confidence;
      s.ready = out.status == tracking::TrackStatus::Tracking;
      if (s.box) last_box_ = s.box;
    } catch (const tracking::TrackerError&) {
      s.failed = true;
      tracker_.reset();
    }
  }

  servo::TrackReport report;
  report.box = s.box;
  report.confidence = s.confidence;
  report.ready = s.ready;
  report.disconnected = s.failed;
  rec.command = ctl_.step(report, rec.sensors, sc_.camera.width, sc_.camera.height, dt);
  rec.mode = ctl_.mode();
  last_cmd_ = rec.command;
  return rec;
}

EpisodeLog EpisodeRunner::finish() {
  EpisodeLog out = log_;
  summarize(out);
  return out;
}

EpisodeLog run_episode(const sim::Scenario& scenario, const EpisodeOptions& options, OperatorFn op) {
  EpisodeRunner runner(scenario, options);
  while (!runner.done()) runner.tick(op);
  return runner.finish();
}

void summarize(EpisodeLog& log) {
  EpisodeSummary s;
  s.ticks = log.ticks.size();
  s.duration = static_cast<double>(s.ticks) / log.tick_hz;
  std::size_t autonomous = 0, visible = 0;
  double iou_sum = 0.0;
  log.interventions.clear();
  std::optional<Interval> open;
  servo::Mode prev = servo::Mode::Manual;
  bool initialized = false;
  for (const auto& r : log.ticks) {
    if (r.mode == servo::Mode::Tracking) ++autonomous;
    if (r.gt) {
      ++visible;
      iou_sum += r.tracker.box ? iou(*r.tracker.box, *r.gt) : 0.0;
    }
    if (r.mode == servo::Mode::Lost && prev != servo::Mode::Lost) ++s.track_losses;
    if (!open) {
      if (r.mode == servo::Mode::Lost)
        open = Interval{r.t, r.t, "loss"};
      else if (r.mode == servo::Mode::Manual && initialized && prev != servo::Mode::Manual)
        open = Interval{r.t, r.t, "override"};
    } else if (r.mode == servo::Mode::Initializing || r.mode == servo::Mode::Tracking) {
      open->end = r.t;
      log.interventions.push_back(*open);
      open.reset();
    }
    if (r.mode != servo::Mode::Manual) initialized = true;
    prev = r.mode;
  }
  if (open) {
    open->end = s.duration;
    log.interventions.push_back(*open);
  }
  s.autonomous_fraction = s.ticks ? static_cast<double>(autonomous) / static_cast<double>(s.ticks) : 0.0;
  s.mean_iou = visible ? iou_sum / static_cast<double>(visible) : 0.0;
  log.summary = s;
}

// ---- persistence ------------------------------------------------------------

namespace {

json vec(const Vec3& v) { return {v.x, v.y, v.z}; }
Vec3 vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
json box_json(const std::optional<BBox>& b) {
  if (!b) return nullptr;
  return {b->x, b->y, b->w, b->h};
}
std::optional<BBox> box_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return BBox{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}
json cmd_json(const nav::ControlCommand& c) { return {c.surge, c.sway, c.heave, c.yaw}; }
nav::ControlCommand cmd_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), j.at(3).get<double>()};
}

OperatorEvent::Kind event_kind(const std::string& s) {
  for (auto k : {OperatorEvent::Kind::InitBox, OperatorEvent::Kind::Override, OperatorEvent::Kind::Release,
                 OperatorEvent::Kind::Reinit})
    if (operator_event_name(k) == s) return k;
  throw SessionError("unknown operator event '" + s + "'");
}

json tick_to_json(const TickRecord& r) {
  json j;
  j["i"] = r.index;
  j["t"] = r.t;
  j["animal"] = {{"p", vec(r.animal.position)},
                 {"v", vec(r.animal.velocity)},
                 {"heading", r.animal.heading},
                 {"clock", r.animal.clock},
                 {"dart", r.animal.dart}};
  j["vehicle"] = {{"p", vec(r.vehicle.position)},
                  {"heading", r.vehicle.heading},
                  {"v", vec(r.vehicle.velocity)},
                  {"yaw_rate", r.vehicle.yaw_rate}};
  j["sensors"] = {{"dvl", vec(r.sensors.dvl_velocity)},
                  {"altitude", r.sensors.dvl_altitude},
                  {"heading", r.sensors.compass_heading},
                  {"depth", r.sensors.depth},
                  {"t", r.sensors.timestamp}};
  j["nav"] = {{"p", vec(r.nav_position)}, {"heading", r.nav_heading}};
  j["gt"] = box_json(r.gt);
  j["tracker"] = {{"box", box_json(r.tracker.box)},
                  {"confidence", r.tracker.confidence},
                  {"ready", r.tracker.ready},
                  {"failed", r.tracker.failed}};
  json events = json::array();
  for (const auto& e : r.events) {
    json ej;
    ej["type"] = operator_event_name(e.kind);
    if (e.box) ej["box"] = box_json(e.box);
    if (e.kind == OperatorEvent::Kind::Override) ej["command"] = cmd_json(e.command);
    events.push_back(ej);
  }
  j["events"] = events;
  j["mode"] = servo::mode_name(r.mode);
  j["command"] = cmd_json(r.command);
  return j;
}

TickRecord tick_from_json(const json& j) {
  TickRecord r;
  r.index = j.at("i").get<std::size_t>();
  r.t = j.at("t").get<double>();
  const auto& a = j.at("animal");
  r.animal.position = vec(a.at("p"));
  r.animal.velocity = vec(a.at("v"));
  r.animal.heading = a.at("heading").get<double>();
  r.animal.clock = a.at("clock").get<double>();
  r.animal.dart = a.at("dart").get<double>();
  const auto& v = j.at("vehicle");
  r.vehicle.position = vec(v.at("p"));
  r.vehicle.heading = v.at("heading").get<double>();
  r.vehicle.velocity = vec(v.at("v"));
  r.vehicle.yaw_rate = v.at("yaw_rate").get<double>();
  const auto& s = j.at("sensors");
  r.sensors.dvl_velocity = vec(s.at("dvl"));
  r.sensors.dvl_altitude = s.at("altitude").get<double>();
  r.sensors.compass_heading = s.at("heading").get<double>();
  r.sensors.depth = s.at("depth").get<double>();
  r.sensors.timestamp = s.at("t").get<double>();
  r.nav_position = vec(j.at("nav").at("p"));
  r.nav_heading = j.at("nav").at("heading").get<double>();
  r.gt = box_from(j.at("gt"));
  const auto& tr = j.at("tracker");
  r.tracker.box = box_from(tr.at("box"));
  r.tracker.confidence = tr.at("confidence").get<double>();
  r.tracker.ready = tr.at("ready").get<bool>();
  r.tracker.failed = tr.at("failed").get<bool>();
  for (const auto& ej : j.at("events")) {
    OperatorEvent e;
    e.kind = event_kind(ej.at("type").get<std::string>());
    if (ej.contains("box")) e.box = box_from(ej["box"]);
    if (ej.contains("command")) e.command = cmd_from(ej["command"]);
    r.events.push_back(e);
  }
  const auto mode = servo::parse_mode(j.at("mode").get<std::string>());
  if (!mode) throw SessionError("unknown mode in episode log");
  r.mode = *mode;
  r.command = cmd_from(j.at("command"));
  return r;
}

}  // namespace

std::string episode_tick_json(const TickRecord& r) { return tick_to_json(r).dump(); }

void save_episode(const fs::path& dir, const EpisodeLog& log) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "log.jsonl", std::ios::trunc);
    json head;
    head["type"] = "episode";
    head["scenario"] = log.scenario_id;
    head["seed"] = log.seed;
    head["tracker"] = log.tracker;
    head["tick_hz"] = log.tick_hz;
    out << head.dump() << '\n';
    for (const auto& r : log.ticks) out << tick_to_json(r).dump() << '\n';
    if (!out) throw SessionError("cannot write " + (dir / "log.jsonl").string());
  }
  json sum;
  sum["scenario"] = log.scenario_id;
  sum["seed"] = log.seed;
  sum["tracker"] = log.tracker;
  sum["tick_hz"] = log.tick_hz;
  sum["duration"] = log.summary.duration;
  sum["ticks"] = log.summary.ticks;
  sum["autonomous_fraction"] = log.summary.autonomous_fraction;
  sum["mean_iou"] = log.summary.mean_iou;
  sum["track_losses"] = log.summary.track_losses;
  json iv = json::array();
  for (const auto& i : log.interventions) iv.push_back({{"start", i.start}, {"end", i.end}, {"cause", i.cause}});
  sum["interventions"] = iv;
  std::ofstream(dir / "summary.json", std::ios::trunc) << sum.dump(2) << '\n';
}

EpisodeLog load_episode(const fs::path& dir) {
  std::ifstream in(dir / "log.jsonl");
  if (!in) throw SessionError("no episode log in " + dir.string());
  EpisodeLog log;
  try {
    std::string line;
    if (!std::getline(in, line)) throw SessionError("empty episode log");
    const json head = json::parse(line);
    if (head.value("type", "") != "episode") throw SessionError("episode log lacks its header line");
    log.scenario_id = head.at("scenario").get<std::string>();
    log.seed = head.at("seed").get<std::uint64_t>();
    log.tracker = head.at("tracker").get<std::string>();
    log.tick_hz = head.at("tick_hz").get<double>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      log.ticks.push_back(tick_from_json(json::parse(line)));
      if (log.ticks.size() > 1 && !(log.ticks.back().t > log.ticks[log.ticks.size() - 2].t))
        throw SessionError("episode ticks are not strictly increasing");
    }
    std::ifstream sin(dir / "summary.json");
    if (!sin) throw SessionError("no summary.json in " + dir.string());
    const json sum = json::parse(sin);
    log.summary.duration = sum.at("duration").get<double>();
    log.summary.ticks = sum.at("ticks").get<std::size_t>();
    log.summary.autonomous_fraction = sum.at("autonomous_fraction").get<double>();
    log.summary.mean_iou = sum.at("mean_iou").get<double>();
    log.summary.track_losses = sum.at("track_losses").get<std::size_t>();
    for (const auto& i : sum.at("interventions"))
      log.interventions.push_back(
          {i.at("start").get<double>(), i.at("end").get<double>(), i.at("cause").get<std::string>()});
  } catch (const json::exception& e) {
    throw SessionError("episode log " + dir.string() + ": " + e.what());
  }
  return log;
}

void export_episode(const fs::path& dir, const EpisodeLog& log) {
  fs::create_directories(dir);
  std::ofstream depth(dir / "depth.csv", std::ios::trunc);
  std::ofstream alt(dir / "altitude.csv", std::ios::trunc);
  depth << "timestamp,depth\n";
  alt << "timestamp,altitude\n";
  for (const auto& r : log.ticks) {
    depth << text::format_double(r.t) << ',' << text::format_double(r.sensors.depth) << '\n';
    alt << text::format_double(r.t) << ',' << text::format_double(r.sensors.dvl_altitude) << '\n';
  }
  std::ofstream modes(dir / "modes.csv", std::ios::trunc);
  modes << "start,end,mode\n";
  for (std::size_t i = 0; i < log.ticks.size();) {
    std::size_t j = i;
    while (j < log.ticks.size() && log.ticks[j].mode == log.ticks[i].mode) ++j;
    const double end = j < log.ticks.size() ? log.ticks[j].t : static_cast<double>(j) / log.tick_hz;
    modes << text::format_double(log.ticks[i].t) << ',' << text::format_double(end) << ','
          << servo::mode_name(log.ticks[i].mode) << '\n';
    i = j;
  }
  std::ofstream iv(dir / "interventions.csv", std::ios::trunc);
  iv << "start,end,cause\n";
  for (const auto& i : log.interventions)
    iv << text::format_double(i.start) << ',' << text::format_double(i.end) << ',' << i.cause << '\n';
  if (!depth || !alt || !modes || !iv) throw SessionError("cannot write exports to " + dir.string());
}

// ---- synthetic sequences ----------------------------------------------------

dataset::SequenceRecord export_sequence(const sim::Scenario& scenario, const fs::path& root) {
  EpisodeOptions opt;
  opt.tracker = parse_tracker_spec("oracle");
  opt.tick_hz = scenario.frame_rate;
  EpisodeRunner runner(scenario, opt);
  ScriptedOperator op;

  dataset::SequenceRecord rec;
  rec.id = scenario.id;
  rec.fps = scenario.frame_rate;
  rec.resolution = {scenario.camera.width, scenario.camera.height};
  rec.animal = "synthetic";
  rec.habitat = scenario.background == sim::Background::Midwater ? "midwater" : "seabed";
  switch (scenario.motion.kind) {
    case sim::MotionKind::ConstantSwim: rec.behavior = "swimming"; break;
    case sim::MotionKind::StopAndGo: rec.behavior = "stop-and-go"; break;
    case sim::MotionKind::Darting: rec.behavior = "darting"; break;
    case sim::MotionKind::Crawl: rec.behavior = "crawling"; break;
  }
  rec.attributes.set(scenario.background == sim::Background::Midwater ? dataset::Attribute::MW
                                                                      : dataset::Attribute::SB);
  if (!scenario.distractors.empty()) rec.attributes.set(dataset::Attribute::SO);

  const fs::path frames = root / rec.id / "frames";
  fs::remove_all(frames);
  fs::create_directories(frames);
  // the sequence ends where the target first leaves the view
  while (!runner.done()) {
    const auto& t = runner.tick(std::ref(op));
    if (!t.gt || !t.gt->valid()) break;
    rec.track.push_back(*t.gt);
    char name[16];
    std::snprintf(name, sizeof name, "%06zu.png", rec.track.size() - 1);
    write_png(frames / name, runner.frame());
  }
  if (rec.track.empty()) throw SessionError("scenario " + scenario.id + ": target never visible");
  rec.frame_dir = frames;
  dataset::save_sequence(root, rec);
  return rec;
}

}  // namespace reefloop::session
