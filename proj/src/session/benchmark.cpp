#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "reefloop/bridge.hpp"
#include "reefloop/image.hpp"
#include "reefloop/session.hpp"

namespace reefloop::session {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

TrackerSpec parse_tracker_spec(const std::string& text) {
  TrackerSpec s;
  s.text = text;
  if (text == "ncc") {
    s.kind = TrackerSpec::Kind::Ncc;
  } else if (text == "ncc-online" || text == "mosse") {
    s.kind = TrackerSpec::Kind::NccOnline;
  } else if (text == "oracle") {
    s.kind = TrackerSpec::Kind::Oracle;
  } else if (text.rfind("bridge:", 0) == 0) {
    s.kind = TrackerSpec::Kind::Bridge;
    s.endpoint = text.substr(7);
    bridge::parse_endpoint(s.endpoint);  // fail early on a bad endpoint
  } else {
    throw SessionError("unknown tracker '" + text + "' (ncc, ncc-online, mosse, oracle, bridge:<endpoint>)");
  }
  return s;
}

std::unique_ptr<tracking::Tracker> make_tracker(const TrackerSpec& spec, std::size_t run_index) {
  switch (spec.kind) {
    case TrackerSpec::Kind::Ncc: {
      auto cfg = tracking::TrackerConfig::fixed_template(spec.search_radius);
      cfg.scale_step = spec.scale_step;
      return std::make_unique<tracking::NccTracker>(cfg);
    }
    case TrackerSpec::Kind::NccOnline: {
      auto cfg = tracking::TrackerConfig::online(spec.update_rate, spec.search_radius);
      cfg.scale_step = spec.scale_step;
      return std::make_unique<tracking::NccTracker>(cfg);
    }
    case TrackerSpec::Kind::Bridge: {
      auto ep = bridge::parse_endpoint(spec.endpoint);
      ep.timeout_ms = spec.timeout_ms;
      ep.env.push_back("REEFLOOP_RUN_INDEX=" + std::to_string(run_index));
      return std::make_unique<bridge::BridgedTracker>(ep);
    }
    case TrackerSpec::Kind::Oracle:
      break;
  }
  throw SessionError("the oracle tracker needs ground truth; it cannot be built on its own");
}

metrics::TrackRun track_sequence(tracking::Tracker& tracker, const dataset::SequenceRecord& seq,
                                 const std::string& tracker_id, std::size_t run_index) {
  metrics::TrackRun run;
  run.sequence_id = seq.id;
  run.tracker_id = tracker_id;
  run.run_index = run_index;
  const std::size_t n = seq.frame_count();
  if (n == 0) return run;
  auto load = [&](std::size_t i) {
    Frame f = read_png(seq.frame_path(i));
    f.timestamp = static_cast<double>(i) / seq.fps;
    return f;
  };
  tracker.init(load(0), seq.track[0]);
  run.boxes.push_back(seq.track[0]);
  run.confidences.push_back(1.0);
  for (std::size_t i = 1; i < n; ++i) {
    const auto out = tracker.track(load(i));
    run.boxes.push_back(out.box);
    run.confidences.push_back(out.confidence);
    run.latencies_ms.push_back(out.latency_ms);
  }
  return run;
}

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  if (out.size() > 40) out.resize(40);
  return out;
}

metrics::TrackRun oracle_run(const dataset::SequenceRecord& seq, std::size_t run_index) {
  metrics::TrackRun run;
  run.sequence_id = seq.id;
  run.tracker_id = "oracle";
  run.run_index = run_index;
  run.boxes = seq.track;
  return run;
}

}  // namespace

BenchmarkResult run_benchmark(const std::vector<dataset::SequenceRecord>& sequences, const TrackerSpec& spec,
                              const BenchmarkOptions& options, RunStore* store) {
  if (sequences.empty()) throw SessionError("dataset has no sequences");
  if (options.n_runs == 0) throw SessionError("need at least one run");
  BenchmarkResult result;
  for (std::size_t r = 0; r < options.n_runs; ++r) {
    RunRecord rec;
    rec.dataset = options.dataset_name;
    rec.tracker = spec.text;
    rec.run_index = r;
    rec.timestamp = utc_now();
    try {
      if (spec.kind == TrackerSpec::Kind::Oracle) {
        for (const auto& seq : sequences) rec.runs.push_back(oracle_run(seq, r));
      } else {
        // a fresh tracker per run; bridged ones get a fresh session per sequence
        for (const auto& seq : sequences) {
          auto tracker = make_tracker(spec, r);
          rec.runs.push_back(track_sequence(*tracker, seq, spec.text, r));
          if (auto* b = dynamic_cast<bridge::BridgedTracker*>(tracker.get())) b->close();
        }
      }
    } catch (const tracking::TrackerError& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    if (store) rec.id = store->save(rec);
    (rec.failed ? result.failed : result.completed).push_back(std::move(rec));
  }
  if (result.completed.empty()) throw SessionError("every run failed; first error: " + result.failed.front().error);
  std::vector<metrics::TrackRun> runs;
  for (const auto& rec : result.completed) runs.insert(runs.end(), rec.runs.begin(), rec.runs.end());
  result.report = metrics::evaluate(sequences, runs, options.eval);
  for (const auto& f : result.failed)
    result.report.warnings.push_back("run " + std::to_string(f.run_index) + " of " + f.tracker +
                                     " failed and was excluded: " + f.error);
  return result;
}

// ---- RunStore ---------------------------------------------------------------

RunStore::RunStore(fs::path root) : root_(std::move(root)) {}

std::string RunStore::save(const RunRecord& record) {
  const fs::path runs = root_ / "runs";
  fs::create_directories(runs);
  std::string stamp = record.timestamp;
  std::erase(stamp, ':');
  std::erase(stamp, '-');
  const std::string base = slug(record.dataset) + "_" + slug(record.tracker) + "_r" +
                           std::to_string(record.run_index) + "_" + stamp;
  std::string id = base;
  for (int k = 2; fs::exists(runs / id); ++k) id = base + "-" + std::to_string(k);

  // build in a hidden directory, then rename so readers never see a half record
  const fs::path tmp = runs / ("." + id + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  {
    std::ofstream out(tmp / "run.jsonl");
    for (const auto& run : record.runs) {
      for (std::size_t i = 0; i < run.boxes.size(); ++i) {
        const BBox& b = run.boxes[i];
        json j;
        j["sequence"] = run.sequence_id;
        j["frame"] = i;
        j["box"] = {b.x, b.y, b.w, b.h};
        if (i < run.confidences.size()) j["confidence"] = run.confidences[i];
        // latencies start at frame 1; frame 0 is the init box
        const std::size_t offset = run.boxes.size() - run.latencies_ms.size();
        if (!run.latencies_ms.empty() && i >= offset) j["latency_ms"] = run.latencies_ms[i - offset];
        out << j.dump() << '\n';
      }
    }
    if (!out) throw SessionError("cannot write " + (tmp / "run.jsonl").string());
  }
  json meta;
  meta["id"] = id;
  meta["dataset"] = record.dataset;
  meta["tracker"] = record.tracker;
  meta["run_index"] = record.run_index;
  meta["timestamp"] = record.timestamp;
  meta["status"] = record.failed ? "failed" : "complete";
  if (record.failed) meta["error"] = record.error;
  json seqs = json::array();
  for (const auto& run : record.runs) seqs.push_back(run.sequence_id);
  meta["sequences"] = seqs;
  std::ofstream(tmp / "meta.json") << meta.dump(2) << '\n';
  fs::rename(tmp, runs / id);
  return id;
}

RunRecord RunStore::load(const std::string& id) const {
  const fs::path dir = root_ / "runs" / id;
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw SessionError("unknown run '" + id + "'");
  RunRecord rec;
  try {
    const json meta = json::parse(meta_in);
    rec.id = meta.at("id").get<std::string>();
    rec.dataset = meta.at("dataset").get<std::string>();
    rec.tracker = meta.at("tracker").get<std::string>();
    rec.run_index = meta.at("run_index").get<std::size_t>();
    rec.timestamp = meta.at("timestamp").get<std::string>();
    rec.failed = meta.at("status").get<std::string>() == "failed";
    rec.error = meta.value("error", std::string{});
    for (const auto& s : meta.at("sequences")) {
      metrics::TrackRun run;
      run.sequence_id = s.get<std::string>();
      run.tracker_id = rec.tracker;
      run.run_index = rec.run_index;
      rec.runs.push_back(run);
    }
    std::map<std::string, metrics::TrackRun*> by_id;
    for (auto& run : rec.runs) by_id[run.sequence_id] = &run;
    std::ifstream in(dir / "run.jsonl");
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      auto it = by_id.find(j.at("sequence").get<std::string>());
      if (it == by_id.end()) throw SessionError("run " + id + ": frame record for an unlisted sequence");
      metrics::TrackRun& run = *it->second;
      if (j.at("frame").get<std::size_t>() != run.boxes.size())
        throw SessionError("run " + id + ": frame records out of order");
      const auto& b = j.at("box");
      run.boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()});
      if (j.contains("confidence")) run.confidences.push_back(j["confidence"].get<double>());
      if (j.contains("latency_ms")) run.latencies_ms.push_back(j["latency_ms"].get<double>());
    }
  } catch (const json::exception& e) {
    throw SessionError("run " + id + ": " + e.what());
  }
  return rec;
}

std::vector<std::string> RunStore::ids() const {
  std::set<std::string> out;
  const fs::path runs = root_ / "runs";
  if (!fs::is_directory(runs)) return {};
  for (const auto& e : fs::directory_iterator(runs)) {
    const std::string name = e.path().filename().string();
    if (e.is_directory() && !name.starts_with(".")) out.insert(name);
  }
  return {out.begin(), out.end()};
}

}  // namespace reefloop::session
