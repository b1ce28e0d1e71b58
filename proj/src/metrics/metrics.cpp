#include "reefloop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace reefloop::metrics {

namespace {

std::vector<double> grid(std::size_t points, double step_denominator) {
  std::vector<double> out(points);
  for (std::size_t i = 0; i < points; ++i) out[i] = static_cast<double>(i) / step_denominator;
  return out;
}

void check_lengths(const TrackRun& run, const dataset::Track& gt) {
  if (run.boxes.size() != gt.size())
    throw MetricsError("run of " + run.tracker_id + " on " + run.sequence_id + " has " +
                       std::to_string(run.boxes.size()) + " boxes, ground truth has " +
                       std::to_string(gt.size()));
  if (gt.empty()) throw MetricsError("sequence " + run.sequence_id + " has no frames");
}

/// Fraction of `errors` at or below each threshold.
std::vector<double> cumulative_fractions(const std::vector<double>& errors,
                                         const std::vector<double>& thresholds) {
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(thresholds.size());
  const double n = static_cast<double>(errors.size());
  for (double t : thresholds) {
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    out.push_back(static_cast<double>(count) / n);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> success_thresholds() { return grid(kSuccessPoints, 20.0); }
std::vector<double> precision_thresholds() { return grid(kPrecisionPoints, 1.0); }
std::vector<double> normalized_precision_thresholds() { return grid(kPrecisionPoints, 100.0); }

SuccessCurve success_curve(const TrackRun& run, const dataset::Track& gt, OverlapRule rule) {
  check_lengths(run, gt);
  std::vector<double> ious(gt.size());
  for (std::size_t t = 0; t < gt.size(); ++t) ious[t] = iou(run.boxes[t], gt[t]);
  std::sort(ious.begin(), ious.end());

  SuccessCurve c;
  c.thresholds = success_thresholds();
  const double n = static_cast<double>(ious.size());
  for (double tau : c.thresholds) {
    const auto first = rule == OverlapRule::AtLeast
                           ? std::lower_bound(ious.begin(), ious.end(), tau)
                           : std::upper_bound(ious.begin(), ious.end(), tau);
    c.values.push_back(static_cast<double>(ious.end() - first) / n);
  }
  c.auc = mean_of(c.values);
  return c;
}

PrecisionCurve precision_score(const TrackRun& run, const dataset::Track& gt) {
  check_lengths(run, gt);
  std::vector<double> errors(gt.size());
  for (std::size_t t = 0; t < gt.size(); ++t) errors[t] = center_error(run.boxes[t], gt[t]);
  PrecisionCurve c;
  c.thresholds = precision_thresholds();
  c.values = cumulative_fractions(errors, c.thresholds);
  c.score = c.values[static_cast<std::size_t>(kPrecisionThresholdPx)];
  return c;
}

NormalizedPrecisionCurve normalized_precision_score(const TrackRun& run, const dataset::Track& gt) {
  check_lengths(run, gt);
  std::vector<double> errors(gt.size());
  for (std::size_t t = 0; t < gt.size(); ++t)
    errors[t] = normalized_center_error(run.boxes[t], gt[t]);
  NormalizedPrecisionCurve c;
  c.thresholds = normalized_precision_thresholds();
  c.values = cumulative_fractions(errors, c.thresholds);
  c.auc = mean_of(c.values);
  return c;
}

FpsStats fps_stats(const TrackRun& run) {
  if (run.latencies_ms.empty())
    throw MetricsError("run of " + run.tracker_id + " on " + run.sequence_id +
                       " has no latency record");
  std::vector<double> sorted = run.latencies_ms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  FpsStats s;
  s.mean_latency_ms = mean_of(sorted);
  s.mean_fps = s.mean_latency_ms > 0.0 ? 1000.0 / s.mean_latency_ms : INFINITY;
  s.median_latency_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  // nearest-rank percentile
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_latency_ms = sorted[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

Scores score_run(const TrackRun& run, const dataset::Track& gt, const EvalOptions& opts) {
  const SuccessCurve sc = success_curve(run, gt, opts.rule);
  const PrecisionCurve pc = precision_score(run, gt);
  const NormalizedPrecisionCurve nc = normalized_precision_score(run, gt);
  Scores s;
  s.success = sc.values;
  s.precision = pc.values;
  s.norm_precision = nc.values;
  s.success_auc = sc.auc;
  s.precision_20px = pc.score;
  s.norm_precision_auc = nc.auc;
  if (!run.latencies_ms.empty()) s.mean_fps = fps_stats(run).mean_fps;
  s.runs = 1;
  s.sequences = 1;
  s.frames = gt.size();
  return s;
}

Scores aggregate_runs(std::span<const TrackRun> runs, const dataset::Track& gt,
                      const EvalOptions& opts) {
  if (runs.empty()) throw MetricsError("no runs to aggregate");
  for (const auto& r : runs) {
    if (r.sequence_id != runs.front().sequence_id)
      throw MetricsError("cannot aggregate runs of different sequences (" +
                         runs.front().sequence_id + ", " + r.sequence_id + ")");
    if (r.tracker_id != runs.front().tracker_id)
      throw MetricsError("cannot aggregate runs of different trackers (" +
                         runs.front().tracker_id + ", " + r.tracker_id + ")");
  }
  std::vector<Scores> per_run;
  per_run.reserve(runs.size());
  for (const auto& r : runs) per_run.push_back(score_run(r, gt, opts));

  Scores out = mean_scores(per_run, Weighting::PerSequence);
  out.sequences = 1;
  out.frames = gt.size();
  return out;
}

Scores mean_scores(std::span<const Scores> cells, Weighting weighting) {
  if (cells.empty()) throw MetricsError("no scores to average");
  std::vector<double> weights;
  for (const auto& c : cells)
    weights.push_back(weighting == Weighting::PerFrame ? static_cast<double>(c.frames) : 1.0);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);

  Scores out;
  out.success.assign(cells.front().success.size(), 0.0);
  out.precision.assign(cells.front().precision.size(), 0.0);
  out.norm_precision.assign(cells.front().norm_precision.size(), 0.0);
  double fps_sum = 0.0;
  double fps_weight = 0.0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const Scores& c = cells[k];
    const double w = weights[k];
    for (std::size_t i = 0; i < out.success.size(); ++i) out.success[i] += w * c.success[i];
    for (std::size_t i = 0; i < out.precision.size(); ++i) out.precision[i] += w * c.precision[i];
    for (std::size_t i = 0; i < out.norm_precision.size(); ++i)
      out.norm_precision[i] += w * c.norm_precision[i];
    out.success_auc += w * c.success_auc;
    out.precision_20px += w * c.precision_20px;
    out.norm_precision_auc += w * c.norm_precision_auc;
    if (c.mean_fps) {
      fps_sum += w * *c.mean_fps;
      fps_weight += w;
    }
    out.runs += c.runs;
    out.sequences += c.sequences;
    out.frames += c.frames;
  }
  for (auto* curve : {&out.success, &out.precision, &out.norm_precision})
    for (double& v : *curve) v /= total;
  out.success_auc /= total;
  out.precision_20px /= total;
  out.norm_precision_auc /= total;
  if (fps_weight > 0.0) out.mean_fps = fps_sum / fps_weight;
  return out;
}

AttributeBreakdown attribute_report(
    const std::vector<dataset::SequenceRecord>& sequences,
    const std::map<std::string, std::map<std::string, Scores>>& per_sequence, Weighting weighting) {
  AttributeBreakdown out;
  for (dataset::Attribute attr : dataset::kAllAttributes) {
    std::vector<std::string> subset;
    for (const auto& s : sequences)
      if (s.attributes.get(attr)) subset.push_back(s.id);
    if (subset.empty()) {
      out.warnings.push_back("attribute " + std::string(dataset::attribute_code(attr)) +
                             " has no sequences; omitted");
      continue;
    }
    auto& cell = out.scores[attr];
    for (const auto& [tracker, seqs] : per_sequence) {
      std::vector<Scores> parts;
      for (const auto& id : subset) {
        const auto it = seqs.find(id);
        if (it == seqs.end())
          throw MetricsError("tracker " + tracker + " has no run on sequence " + id);
        parts.push_back(it->second);
      }
      cell[tracker] = mean_scores(parts, weighting);
    }
    std::vector<std::string> ranking;
    for (const auto& [tracker, _] : cell) ranking.push_back(tracker);
    std::stable_sort(ranking.begin(), ranking.end(), [&](const auto& a, const auto& b) {
      return cell.at(a).success_auc > cell.at(b).success_auc;
    });
    out.rankings[attr] = std::move(ranking);
  }
  return out;
}

MetricReport evaluate(const std::vector<dataset::SequenceRecord>& sequences,
                      const std::vector<TrackRun>& runs, const EvalOptions& opts) {
  std::map<std::string, const dataset::SequenceRecord*> by_id;
  for (const auto& s : sequences) by_id[s.id] = &s;

  // tracker -> sequence -> runs
  std::map<std::string, std::map<std::string, std::vector<TrackRun>>> grouped;
  for (const auto& r : runs) {
    if (!by_id.contains(r.sequence_id))
      throw MetricsError("run references unknown sequence " + r.sequence_id);
    grouped[r.tracker_id][r.sequence_id].push_back(r);
  }

  std::map<std::string, std::map<std::string, Scores>> per_sequence;
  for (const auto& [tracker, seqs] : grouped) {
    for (const auto& s : sequences) {
      const auto it = seqs.find(s.id);
      if (it == seqs.end()) throw MetricsError("tracker " + tracker + " has no run on sequence " + s.id);
      per_sequence[tracker][s.id] = aggregate_runs(it->second, s.track, opts);
    }
  }

  AttributeBreakdown attrs = attribute_report(sequences, per_sequence, opts.weighting);

  MetricReport report;
  report.weighting = opts.weighting;
  report.warnings = std::move(attrs.warnings);
  report.attribute_rankings = std::move(attrs.rankings);
  for (const auto& [tracker, seqs] : per_sequence) {
    TrackerReport tr;
    tr.tracker_id = tracker;
    tr.per_sequence = seqs;
    std::vector<Scores> cells;
    for (const auto& [_, sc] : seqs) cells.push_back(sc);
    tr.overall = mean_scores(cells, opts.weighting);
    for (const auto& [attr, by_tracker] : attrs.scores) tr.per_attribute[attr] = by_tracker.at(tracker);
    report.trackers.push_back(std::move(tr));
  }
  std::stable_sort(report.trackers.begin(), report.trackers.end(), [](const auto& a, const auto& b) {
    return a.overall.success_auc > b.overall.success_auc;
  });
  return report;
}

}  // namespace reefloop::metrics
