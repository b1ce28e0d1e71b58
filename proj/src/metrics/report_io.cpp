#include <fstream>
#include <sstream>

#include <json.hpp>

#include "reefloop/metrics.hpp"
#include "reefloop/text.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace reefloop::metrics {

namespace {

json scores_to_json(const Scores& s) {
  json j;
  j["success_auc"] = s.success_auc;
  j["precision_20px"] = s.precision_20px;
  j["norm_precision_auc"] = s.norm_precision_auc;
  j["mean_fps"] = s.mean_fps ? json(*s.mean_fps) : json(nullptr);
  j["runs"] = s.runs;
  j["sequences"] = s.sequences;
  j["frames"] = s.frames;
  j["curves"] = {{"success", s.success},
                 {"precision", s.precision},
                 {"norm_precision", s.norm_precision}};
  return j;
}

Scores scores_from_json(const json& j) {
  Scores s;
  s.success_auc = j.at("success_auc").get<double>();
  s.precision_20px = j.at("precision_20px").get<double>();
  s.norm_precision_auc = j.at("norm_precision_auc").get<double>();
  if (!j.at("mean_fps").is_null()) s.mean_fps = j.at("mean_fps").get<double>();
  s.runs = j.at("runs").get<std::size_t>();
  s.sequences = j.at("sequences").get<std::size_t>();
  s.frames = j.at("frames").get<std::size_t>();
  const json& c = j.at("curves");
  s.success = c.at("success").get<std::vector<double>>();
  s.precision = c.at("precision").get<std::vector<double>>();
  s.norm_precision = c.at("norm_precision").get<std::vector<double>>();
  return s;
}

std::string file_safe(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return out;
}

void write_curve(const fs::path& file, const std::vector<double>& thresholds,
                 const std::vector<double>& values) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw MetricsError("cannot write " + file.string());
  out << "threshold,value\n";
  for (std::size_t i = 0; i < values.size(); ++i)
    out << text::format_double(thresholds[i]) << ',' << text::format_double(values[i]) << '\n';
}

void append_rows(std::ostringstream& out, const std::string& tracker, std::string_view subset,
                 const Scores& s) {
  out << tracker << ',' << subset << ",success_auc," << text::format_double(s.success_auc) << '\n'
      << tracker << ',' << subset << ",precision_20px," << text::format_double(s.precision_20px) << '\n'
      << tracker << ',' << subset << ",norm_precision_auc,"
      << text::format_double(s.norm_precision_auc) << '\n';
  if (s.mean_fps) out << tracker << ',' << subset << ",mean_fps," << text::format_double(*s.mean_fps) << '\n';
}

}  // namespace

std::string report_json(const MetricReport& report, const std::vector<dataset::Attribute>& subsets,
                        bool include_sequences) {
  json root;
  root["weighting"] = report.weighting == Weighting::PerFrame ? "per_frame" : "per_sequence";
  root["thresholds"] = {{"success", success_thresholds()},
                        {"precision", precision_thresholds()},
                        {"norm_precision", normalized_precision_thresholds()}};
  json trackers = json::array();
  for (const auto& t : report.trackers) {
    json jt;
    jt["tracker"] = t.tracker_id;
    jt["overall"] = scores_to_json(t.overall);
    if (include_sequences) {
      json seqs = json::object();
      for (const auto& [id, s] : t.per_sequence) seqs[id] = scores_to_json(s);
      jt["sequences"] = seqs;
    }
    json attrs = json::object();
    for (const auto& [a, s] : t.per_attribute) {
      if (!subsets.empty() && std::find(subsets.begin(), subsets.end(), a) == subsets.end()) continue;
      attrs[std::string(dataset::attribute_code(a))] = scores_to_json(s);
    }
    jt["attributes"] = attrs;
    trackers.push_back(jt);
  }
  root["trackers"] = trackers;
  json rankings = json::object();
  for (const auto& [a, ids] : report.attribute_rankings) {
    if (!subsets.empty() && std::find(subsets.begin(), subsets.end(), a) == subsets.end()) continue;
    rankings[std::string(dataset::attribute_code(a))] = ids;
  }
  root["attribute_rankings"] = rankings;
  root["warnings"] = report.warnings;
  return root.dump(2) + "\n";
}

std::string report_csv(const MetricReport& report, const std::vector<dataset::Attribute>& subsets) {
  std::ostringstream out;
  out << "tracker,subset,metric,value\n";
  for (const auto& t : report.trackers) {
    append_rows(out, t.tracker_id, "all", t.overall);
    for (dataset::Attribute a : subsets) {
      const auto it = t.per_attribute.find(a);
      if (it != t.per_attribute.end()) append_rows(out, t.tracker_id, dataset::attribute_code(a), it->second);
    }
  }
  return out.str();
}

void write_report(const fs::path& dir, const MetricReport& report) {
  fs::create_directories(dir / "curves");
  {
    std::ofstream out(dir / "report.json", std::ios::trunc);
    if (!out) throw MetricsError("cannot write " + (dir / "report.json").string());
    out << report_json(report, {});
  }
  {
    std::ofstream out(dir / "report.csv", std::ios::trunc);
    std::vector<dataset::Attribute> all(dataset::kAllAttributes.begin(), dataset::kAllAttributes.end());
    out << report_csv(report, all);
  }
  for (const auto& t : report.trackers) {
    const std::string stem = file_safe(t.tracker_id);
    write_curve(dir / "curves" / (stem + "_success.csv"), success_thresholds(), t.overall.success);
    write_curve(dir / "curves" / (stem + "_precision.csv"), precision_thresholds(), t.overall.precision);
    write_curve(dir / "curves" / (stem + "_norm_precision.csv"), normalized_precision_thresholds(),
                t.overall.norm_precision);
  }
}

MetricReport read_report_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw MetricsError("cannot open " + file.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw MetricsError(file.string() + ": " + e.what());
  }
  MetricReport report;
  report.weighting = root.value("weighting", "per_sequence") == "per_frame" ? Weighting::PerFrame
                                                                            : Weighting::PerSequence;
  try {
    for (const auto& jt : root.at("trackers")) {
      TrackerReport t;
      t.tracker_id = jt.at("tracker").get<std::string>();
      t.overall = scores_from_json(jt.at("overall"));
      if (jt.contains("sequences"))
        for (const auto& [id, s] : jt.at("sequences").items()) t.per_sequence[id] = scores_from_json(s);
      for (const auto& [code, s] : jt.at("attributes").items()) {
        const auto a = dataset::parse_attribute(code);
        if (!a) throw MetricsError("unknown attribute " + code + " in " + file.string());
        t.per_attribute[*a] = scores_from_json(s);
      }
      report.trackers.push_back(std::move(t));
    }
    for (const auto& [code, ids] : root.at("attribute_rankings").items()) {
      const auto a = dataset::parse_attribute(code);
      if (!a) throw MetricsError("unknown attribute " + code + " in " + file.string());
      report.attribute_rankings[*a] = ids.get<std::vector<std::string>>();
    }
    report.warnings = root.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw MetricsError(file.string() + ": " + e.what());
  }
  return report;
}

}  // namespace reefloop::metrics
