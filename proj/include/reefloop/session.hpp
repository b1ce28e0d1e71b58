#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "reefloop/dataset.hpp"
#include "reefloop/metrics.hpp"
#include "reefloop/nav.hpp"
#include "reefloop/servo.hpp"
#include "reefloop/sim.hpp"
#include "reefloop/tracker.hpp"

namespace reefloop::session {

class SessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- tracker specs ----------------------------------------------------------

/// "ncc" | "ncc-online" | "mosse" (alias of ncc-online) | "oracle" |
/// "bridge:stdio:<command>" | "bridge:tcp:<host>:<port>"
struct TrackerSpec {
  enum class Kind { Ncc, NccOnline, Oracle, Bridge } kind = Kind::Ncc;
  std::string text;      ///< as given; used as the tracker id
  std::string endpoint;  ///< bridge only, without the "bridge:" prefix
  int search_radius = 16;
  double update_rate = 0.1;  ///< NccOnline only
  double scale_step = 0.05;  ///< built-in trackers; 0 keeps the init size
  int timeout_ms = 5000;     ///< bridge only
};

TrackerSpec parse_tracker_spec(const std::string& text);

/// Builds a live tracker. Oracle specs need ground truth and are handled by
/// the callers. Bridged peers see REEFLOOP_RUN_INDEX=<run_index>.
std::unique_ptr<tracking::Tracker> make_tracker(const TrackerSpec& spec, std::size_t run_index = 0);

// ---- benchmark --------------------------------------------------------------

struct RunRecord {
  std::string id;
  std::string dataset;
  std::string tracker;
  std::size_t run_index = 0;
  std::string timestamp;  ///< UTC, ISO 8601
  bool failed = false;
  std::string error;
  std::vector<metrics::TrackRun> runs;  ///< one per sequence (partial when failed)
};

/// Append-only store of benchmark runs under `<root>/runs/<id>/`:
/// run.jsonl holds one frame record per line, meta.json the key and status.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  /// Writes a new record and returns its id. Existing records are never
  /// touched; ids that already exist get a numeric suffix.
  std::string save(const RunRecord& record);
  RunRecord load(const std::string& id) const;
  std::vector<std::string> ids() const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

struct BenchmarkOptions {
  std::size_t n_runs = 5;
  std::string dataset_name = "dataset";
  metrics::EvalOptions eval;
};

struct BenchmarkResult {
  metrics::MetricReport report;
  std::vector<RunRecord> completed;
  std::vector<RunRecord> failed;
};

/// Every sequence: init on frame 0 with the ground-truth box, track the rest.
/// Frame 0 is scored with the init box. Runs where the tracker throws are
/// kept in `failed` and left out of the report. With a store, every run
/// (failed ones included) is persisted.
BenchmarkResult run_benchmark(const std::vector<dataset::SequenceRecord>& sequences, const TrackerSpec& spec,
                              const BenchmarkOptions& options = {}, RunStore* store = nullptr);

/// One pass of `tracker` over one sequence. Throws what the tracker throws.
metrics::TrackRun track_sequence(tracking::Tracker& tracker, const dataset::SequenceRecord& seq,
                                 const std::string& tracker_id, std::size_t run_index);

// ---- episodes ---------------------------------------------------------------

struct OperatorEvent {
  enum class Kind { InitBox, Override, Release, Reinit } kind = Kind::InitBox;
  std::optional<BBox> box;       ///< InitBox, optional for Reinit
  nav::ControlCommand command;   ///< Override

  friend bool operator==(const OperatorEvent&, const OperatorEvent&) = default;
};

std::string_view operator_event_name(OperatorEvent::Kind k);

struct TrackerSample {
  std::optional<BBox> box;
  double confidence = 0.0;
  bool ready = false;
  bool failed = false;

  friend bool operator==(const TrackerSample&, const TrackerSample&) = default;
};

struct TickRecord {
  std::size_t index = 0;
  double t = 0.0;
  sim::AnimalState animal;
  nav::VehicleState vehicle;
  nav::SensorPacket sensors;
  Vec3 nav_position;
  double nav_heading = 0.0;
  std::optional<BBox> gt;
  TrackerSample tracker;
  std::vector<OperatorEvent> events;
  servo::Mode mode = servo::Mode::Manual;
  nav::ControlCommand command;

  friend bool operator==(const TickRecord&, const TickRecord&) = default;
};

struct Interval {
  double start = 0.0;
  double end = 0.0;
  std::string cause;  ///< "loss" | "override"

  friend bool operator==(const Interval&, const Interval&) = default;
};

struct EpisodeSummary {
  double duration = 0.0;
  std::size_t ticks = 0;
  double autonomous_fraction = 0.0;  ///< Tracking ticks / ticks
  double mean_iou = 0.0;             ///< over ticks with visible ground truth
  std::size_t track_losses = 0;      ///< Tracking -> Lost transitions

  friend bool operator==(const EpisodeSummary&, const EpisodeSummary&) = default;
};

struct EpisodeLog {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::string tracker;
  double tick_hz = 10.0;
  std::vector<TickRecord> ticks;
  std::vector<Interval> interventions;
  EpisodeSummary summary;

  friend bool operator==(const EpisodeLog&, const EpisodeLog&) = default;
};

/// What an operator sees before deciding on this tick's events.
struct OperatorView {
  double t = 0.0;
  servo::Mode mode = servo::Mode::Manual;
  std::optional<BBox> gt;
  std::optional<BBox> last_box;  ///< last tracker box
  bool ever_initialized = false;
};

using OperatorFn = std::function<std::vector<OperatorEvent>(const OperatorView&)>;

/// Headless stand-in for the human: initializes on the ground-truth box as
/// soon as it is visible and re-initializes after `reinit_after_s` of manual
/// control following a loss.
class ScriptedOperator {
 public:
  explicit ScriptedOperator(double reinit_after_s = 2.0) : reinit_after_s_(reinit_after_s) {}
  std::vector<OperatorEvent> operator()(const OperatorView& view);

 private:
  double reinit_after_s_;
  std::optional<double> manual_since_;
};

struct EpisodeOptions {
  TrackerSpec tracker;
  servo::ServoConfig servo;
  double tick_hz = 10.0;
  std::optional<double> duration;  ///< defaults to the scenario's
};

/// Fixed-step closed loop. Each tick: step animal, step vehicle, render,
/// operator events, tracker, servo. Owns all world and controller state.
class EpisodeRunner {
 public:
  EpisodeRunner(const sim::Scenario& scenario, EpisodeOptions options);
  ~EpisodeRunner();

  bool done() const;
  const TickRecord& tick(const OperatorFn& op);
  const Frame& frame() const { return frame_; }
  std::size_t tick_count() const;
  double dt() const { return 1.0 / options_.tick_hz; }
  /// Summary and intervals over the ticks so far.
  EpisodeLog finish();

 private:
  void apply(const OperatorEvent& e, TickRecord& rec);
  void start_tracker(const BBox& box, TickRecord& rec);

  sim::Scenario sc_;
  EpisodeOptions options_;
  std::size_t total_ticks_ = 0;
  sim::World world_;
  nav::VehicleState vehicle_;
  nav::NavEstimate nav_;
  nav::ControlCommand last_cmd_;
  servo::ServoController ctl_;
  std::unique_ptr<tracking::Tracker> tracker_;
  bool tracker_fresh_ = false;
  bool ever_initialized_ = false;
  std::optional<BBox> last_box_;
  std::optional<BBox> gt_;
  std::mt19937_64 sensor_rng_;
  Frame frame_;
  EpisodeLog log_;
};

/// pre: tick_hz >= 9.
EpisodeLog run_episode(const sim::Scenario& scenario, const EpisodeOptions& options,
                       OperatorFn op = ScriptedOperator{});

/// Summary and intervention intervals recomputed from the ticks.
void summarize(EpisodeLog& log);

/// `<dir>/log.jsonl` and `<dir>/summary.json`.
void save_episode(const std::filesystem::path& dir, const EpisodeLog& log);
EpisodeLog load_episode(const std::filesystem::path& dir);
std::string episode_tick_json(const TickRecord& r);

/// depth.csv (timestamp,depth), altitude.csv, modes.csv (start,end,mode),
/// interventions.csv (start,end,cause).
void export_episode(const std::filesystem::path& dir, const EpisodeLog& log);

/// Renders the scenario with the ground-truth box driving the servo and
/// writes it as a dataset sequence under `<root>/<scenario id>/`.
dataset::SequenceRecord export_sequence(const sim::Scenario& scenario, const std::filesystem::path& root);

// ---- operator channel -------------------------------------------------------

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 0;  ///< 0 picks a free port
  double max_frame_hz = 10.0;
  std::size_t telemetry_queue = 64;
  int operator_delay_ms = 0;  ///< artificial channel latency on console input
  bool wall_clock = true;     ///< pace ticks at tick_hz
  int send_buffer_bytes = 0;  ///< SO_SNDBUF for the console socket; 0 keeps the default
};

struct ServeStats {
  std::size_t ticks = 0;
  std::size_t frames_sent = 0;
  std::size_t frames_dropped = 0;
  std::size_t telemetry_dropped = 0;
  std::size_t rejected_connections = 0;
  std::size_t rejected_messages = 0;
  double max_tick_interval_s = 0.0;
  double min_tick_interval_s = 0.0;
};

std::optional<OperatorEvent> parse_operator_message(const std::string& line, std::string* error = nullptr);
std::string telemetry_message(const TickRecord& r);

/// Single-operator duplex channel. Console input is queued and drained once
/// per tick; output goes through a bounded telemetry queue and a latest-only
/// frame mailbox, so a slow or stalled console never blocks the caller.
class OperatorServer {
 public:
  explicit OperatorServer(ServeOptions options);
  ~OperatorServer();
  OperatorServer(const OperatorServer&) = delete;
  OperatorServer& operator=(const OperatorServer&) = delete;

  int port() const;
  bool connected() const;
  const ServeOptions& options() const;
  /// Console events that are due, oldest first.
  std::vector<OperatorEvent> drain();
  /// Non-blocking; called once per tick by the control loop.
  void publish(const TickRecord& r, const Frame& frame);
  void stop();
  ServeStats stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs one episode with the console as operator. Returns when the episode
/// ends or `stop` turns true.
EpisodeLog serve_episode(const sim::Scenario& scenario, const EpisodeOptions& options, OperatorServer& server,
                         const std::function<bool()>& stop = {}, ServeStats* stats = nullptr);

}  // namespace reefloop::session
