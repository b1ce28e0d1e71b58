#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "reefloop/session.hpp"
#include "reefloop/text.hpp"

using namespace reefloop;
namespace fs = std::filesystem;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<dataset::Attribute> parse_attrs(const std::string& list) {
  std::vector<dataset::Attribute> out;
  std::stringstream ss(list);
  for (std::string code; std::getline(ss, code, ',');) {
    if (code.empty()) continue;
    const auto a = dataset::parse_attribute(code);
    if (!a) throw std::runtime_error("unknown attribute '" + code + "'");
    out.push_back(*a);
  }
  return out;
}

std::string file_slug(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  return out.substr(0, 40);
}

// ---- dataset ---------------------------------------------------------------

int dataset_validate(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset root " + root.string() + " not found");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "meta.toml")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  int bad = 0;
  for (const auto& d : dirs) {
    std::vector<std::string> warnings;
    try {
      const auto rec = dataset::load_sequence(d, warnings);
      std::cout << "ok    " << rec.id << " (" << rec.frame_count() << " frames)\n";
    } catch (const std::exception& e) {
      std::cout << "error " << d.filename().string() << ": " << e.what() << '\n';
      ++bad;
    }
    for (const auto& w : warnings) std::cout << "  warning: " << w << '\n';
  }
  std::cout << dirs.size() - bad << "/" << dirs.size() << " sequences valid\n";
  return bad == 0 ? 0 : 1;
}

int dataset_attrs(const fs::path& root) {
  const auto res = dataset::load_dataset(root);
  std::cout << std::left << std::setw(24) << "sequence" << std::setw(8) << "frames";
  for (auto a : dataset::kAllAttributes) std::cout << std::setw(5) << dataset::attribute_code(a);
  std::cout << "LR@480p\n";
  for (const auto& s : res.sequences) {
    std::cout << std::setw(24) << s.id << std::setw(8) << s.frame_count();
    for (auto a : dataset::kAllAttributes) std::cout << std::setw(5) << (s.attributes.get(a) ? "x" : ".");
    std::cout << (s.lr_at_standard_resolution ? "x" : ".") << '\n';
  }
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

// ---- eval / report ---------------------------------------------------------

int eval(const fs::path& dataset_root, const std::vector<std::string>& trackers, std::size_t n_runs,
         const fs::path& out, bool weight_frames) {
  const auto data = dataset::load_dataset(dataset_root);
  for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
  if (data.sequences.empty()) throw std::runtime_error("no sequences under " + dataset_root.string());

  session::RunStore store(out);
  session::BenchmarkOptions opt;
  opt.n_runs = n_runs;
  opt.dataset_name = dataset_root.filename().empty() ? dataset_root.parent_path().filename().string()
                                                     : dataset_root.filename().string();
  if (weight_frames) opt.eval.weighting = metrics::Weighting::PerFrame;

  std::vector<metrics::TrackRun> all;
  std::vector<std::string> warnings;
  for (const auto& t : trackers) {
    const auto spec = session::parse_tracker_spec(t);
    std::cerr << "running " << t << " x" << n_runs << " on " << data.sequences.size() << " sequences\n";
    const auto res = session::run_benchmark(data.sequences, spec, opt, &store);
    for (const auto& rec : res.completed) all.insert(all.end(), rec.runs.begin(), rec.runs.end());
    warnings.insert(warnings.end(), res.report.warnings.begin(), res.report.warnings.end());
  }
  auto report = metrics::evaluate(data.sequences, all, opt.eval);
  for (const auto& w : warnings)
    if (std::find(report.warnings.begin(), report.warnings.end(), w) == report.warnings.end())
      report.warnings.push_back(w);
  metrics::write_report(out, report);
  std::cout << metrics::report_csv(report, {});
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

int report(const fs::path& in, const std::string& attrs, const std::string& format) {
  const auto rep = metrics::read_report_json(in / "report.json");
  const auto subsets = parse_attrs(attrs);
  if (format == "csv")
    std::cout << metrics::report_csv(rep, subsets);
  else
    std::cout << metrics::report_json(rep, subsets, false);
  return 0;
}

// ---- simulation ------------------------------------------------------------

session::EpisodeOptions episode_options(const fs::path& scenario_file, const std::string& tracker, double tick_hz,
                                        double duration) {
  session::EpisodeOptions o;
  o.tracker = session::parse_tracker_spec(tracker);
  o.servo = servo::parse_servo_config(slurp(scenario_file));
  o.tick_hz = tick_hz;
  if (duration > 0) o.duration = duration;
  return o;
}

void print_summary(const session::EpisodeLog& log) {
  const auto& s = log.summary;
  std::cout << "scenario " << log.scenario_id << " seed " << log.seed << " tracker " << log.tracker << '\n'
            << "duration " << s.duration << " s, " << s.ticks << " ticks\n"
            << "autonomous " << 100.0 * s.autonomous_fraction << " %\n"
            << "mean IoU " << s.mean_iou << '\n'
            << "track losses " << s.track_losses << '\n';
  for (const auto& iv : log.interventions)
    std::cout << "intervention " << iv.start << " - " << iv.end << " s (" << iv.cause << ")\n";
}

fs::path write_episode(const fs::path& out, const session::EpisodeLog& log) {
  const fs::path root = out / "episodes";
  const std::string base = file_slug(log.scenario_id) + "_" + file_slug(log.tracker);
  std::string id = base;
  for (int k = 2; fs::exists(root / id); ++k) id = base + "-" + std::to_string(k);
  session::save_episode(root / id, log);
  session::export_episode(root / id, log);
  return root / id;
}

int simulate(const fs::path& scenario_file, const std::string& export_root) {
  const auto sc = sim::load_scenario(scenario_file);
  if (!export_root.empty()) {
    const auto rec = session::export_sequence(sc, export_root);
    std::cout << "wrote " << (fs::path(export_root) / rec.id).string() << " (" << rec.frame_count() << " frames)\n";
    return 0;
  }
  session::EpisodeOptions o;
  o.tracker = session::parse_tracker_spec("oracle");
  o.servo = servo::parse_servo_config(slurp(scenario_file));
  o.tick_hz = sc.frame_rate;
  print_summary(session::run_episode(sc, o));
  return 0;
}

std::pair<std::string, int> split_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw std::runtime_error("--bind wants HOST:PORT");
  return {bind.substr(0, colon), std::stoi(bind.substr(colon + 1))};
}

session::EpisodeLog console_episode(const sim::Scenario& sc, const session::EpisodeOptions& o,
                                    const std::string& bind, int delay_ms, double frame_hz) {
  session::ServeOptions so;
  std::tie(so.host, so.port) = split_bind(bind);
  so.operator_delay_ms = delay_ms;
  so.max_frame_hz = frame_hz;
  session::OperatorServer server(so);
  std::cerr << "operator channel on " << so.host << ":" << server.port() << '\n';
  session::ServeStats stats;
  auto log = session::serve_episode(sc, o, server, [] { return g_interrupted != 0; }, &stats);
  std::cerr << "frames sent " << stats.frames_sent << ", dropped " << stats.frames_dropped << ", telemetry dropped "
            << stats.telemetry_dropped << ", tick interval " << stats.min_tick_interval_s << " - "
            << stats.max_tick_interval_s << " s\n";
  return log;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reefloop: underwater tracking benchmark and closed-loop testbed"};
  app.require_subcommand(1);

  auto* ds = app.add_subcommand("dataset", "dataset checks");
  ds->require_subcommand(1);
  std::string ds_root;
  auto* ds_validate = ds->add_subcommand("validate", "load every sequence and report problems");
  ds_validate->add_option("root", ds_root, "dataset root")->required();
  auto* ds_attrs = ds->add_subcommand("attrs", "attribute table");
  ds_attrs->add_option("root", ds_root, "dataset root")->required();

  auto* ev = app.add_subcommand("eval", "benchmark trackers on a dataset");
  std::string ev_dataset, ev_out;
  std::vector<std::string> ev_trackers;
  std::size_t ev_runs = 5;
  bool ev_frames = false;
  ev->add_option("--dataset", ev_dataset)->required();
  ev->add_option("--tracker", ev_trackers, "ncc | ncc-online | mosse | oracle | bridge:<endpoint> (repeatable)")
      ->required();
  ev->add_option("--runs", ev_runs)->check(CLI::PositiveNumber);
  ev->add_option("--out", ev_out)->required();
  ev->add_flag("--per-frame", ev_frames, "weight sequences by frame count");

  auto* rp = app.add_subcommand("report", "print a stored report");
  std::string rp_in, rp_attr, rp_format = "csv";
  rp->add_option("--in", rp_in)->required();
  rp->add_option("--attr", rp_attr, "comma-separated attribute codes, e.g. SV,CR");
  rp->add_option("--format", rp_format)->check(CLI::IsMember({"csv", "json"}));

  auto* simc = app.add_subcommand("simulate", "run a scenario with the ground-truth tracker");
  std::string sim_scenario, sim_export;
  simc->add_option("--scenario", sim_scenario)->required()->check(CLI::ExistingFile);
  simc->add_option("--export", sim_export, "write the rendered scenario as a dataset sequence under this root");

  auto* ep = app.add_subcommand("episode", "closed-loop episode");
  std::string ep_scenario, ep_tracker = "ncc", ep_operator = "scripted", ep_out = ".", ep_bind = "127.0.0.1:8765";
  double ep_hz = 10.0, ep_duration = 0.0, ep_frame_hz = 10.0;
  int ep_delay = 0;
  ep->add_option("--scenario", ep_scenario)->required()->check(CLI::ExistingFile);
  ep->add_option("--tracker", ep_tracker);
  ep->add_option("--operator", ep_operator)->check(CLI::IsMember({"scripted", "console"}));
  ep->add_option("--tick-hz", ep_hz);
  ep->add_option("--duration", ep_duration, "seconds; defaults to the scenario's");
  ep->add_option("--out", ep_out, "episodes are written under <out>/episodes/");
  ep->add_option("--bind", ep_bind, "console operator only");
  ep->add_option("--operator-delay-ms", ep_delay, "console operator only");
  ep->add_option("--max-frame-hz", ep_frame_hz, "console operator only");

  auto* sv = app.add_subcommand("serve", "run a scenario for an operator console");
  std::string sv_bind = "127.0.0.1:8765", sv_scenario, sv_tracker = "ncc", sv_out;
  double sv_hz = 10.0, sv_frame_hz = 10.0;
  int sv_delay = 0;
  sv->add_option("--bind", sv_bind);
  sv->add_option("--scenario", sv_scenario)->required()->check(CLI::ExistingFile);
  sv->add_option("--tracker", sv_tracker);
  sv->add_option("--tick-hz", sv_hz);
  sv->add_option("--operator-delay-ms", sv_delay);
  sv->add_option("--max-frame-hz", sv_frame_hz);
  sv->add_option("--out", sv_out, "also save the episode under <out>/episodes/");

  CLI11_PARSE(app, argc, argv);
  std::signal(SIGINT, [](int) { g_interrupted = 1; });
  std::signal(SIGTERM, [](int) { g_interrupted = 1; });

  try {
    if (*ds_validate) return dataset_validate(ds_root);
    if (*ds_attrs) return dataset_attrs(ds_root);
    if (*ev) return eval(ev_dataset, ev_trackers, ev_runs, ev_out, ev_frames);
    if (*rp) return report(rp_in, rp_attr, rp_format);
    if (*simc) return simulate(sim_scenario, sim_export);
    if (*ep) {
      const auto sc = sim::load_scenario(ep_scenario);
      const auto o = episode_options(ep_scenario, ep_tracker, ep_hz, ep_duration);
      const auto log = ep_operator == "console" ? console_episode(sc, o, ep_bind, ep_delay, ep_frame_hz)
                                                : session::run_episode(sc, o);
      print_summary(log);
      std::cout << "wrote " << write_episode(ep_out, log).string() << '\n';
      return 0;
    }
    if (*sv) {
      const auto sc = sim::load_scenario(sv_scenario);
      const auto log = console_episode(sc, episode_options(sv_scenario, sv_tracker, sv_hz, 0.0), sv_bind, sv_delay,
                                       sv_frame_hz);
      print_summary(log);
      if (!sv_out.empty()) std::cout << "wrote " << write_episode(sv_out, log).string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
