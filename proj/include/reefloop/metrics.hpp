#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reefloop/dataset.hpp"
#include "reefloop/geometry.hpp"

namespace reefloop::metrics {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One tracker pass over one sequence.
struct TrackRun {
  std::string sequence_id;
  std::string tracker_id;
  std::size_t run_index = 0;
  std::vector<BBox> boxes;          ///< empty box = no prediction
  std::vector<double> confidences;  ///< optional, per frame
  std::vector<double> latencies_ms; ///< optional, per frame

  friend bool operator==(const TrackRun&, const TrackRun&) = default;
};

/// How an IoU is compared against a success threshold.
enum class OverlapRule {
  AtLeast,  ///< iou >= tau (default; a perfect tracker scores 1 at tau = 1)
  Exceeds,  ///< iou > tau
};

/// How sequences are weighted when forming dataset-level numbers.
enum class Weighting { PerSequence, PerFrame };

inline constexpr std::size_t kSuccessPoints = 21;
inline constexpr std::size_t kPrecisionPoints = 51;
inline constexpr double kPrecisionThresholdPx = 20.0;

/// 0, 0.05, ..., 1
std::vector<double> success_thresholds();
/// 0, 1, ..., 50 px
std::vector<double> precision_thresholds();
/// 0, 0.01, ..., 0.5
std::vector<double> normalized_precision_thresholds();

struct SuccessCurve {
  std::vector<double> thresholds;
  std::vector<double> values;
  double auc = 0.0;
};

struct PrecisionCurve {
  std::vector<double> thresholds;
  std::vector<double> values;
  double score = 0.0;  ///< value at 20 px
};

struct NormalizedPrecisionCurve {
  std::vector<double> thresholds;
  std::vector<double> values;
  double auc = 0.0;
};

struct FpsStats {
  double mean_fps = 0.0;
  double mean_latency_ms = 0.0;
  double median_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
};

SuccessCurve success_curve(const TrackRun& run, const dataset::Track& gt,
                           OverlapRule rule = OverlapRule::AtLeast);
PrecisionCurve precision_score(const TrackRun& run, const dataset::Track& gt);
NormalizedPrecisionCurve normalized_precision_score(const TrackRun& run, const dataset::Track& gt);
FpsStats fps_stats(const TrackRun& run);

/// Everything the report carries for one (tracker, subset) cell. Curves live
/// on the fixed threshold grids above.
struct Scores {
  std::vector<double> success;
  std::vector<double> precision;
  std::vector<double> norm_precision;
  double success_auc = 0.0;
  double precision_20px = 0.0;
  double norm_precision_auc = 0.0;
  std::optional<double> mean_fps;
  std::size_t runs = 0;
  std::size_t sequences = 0;
  std::size_t frames = 0;

  friend bool operator==(const Scores&, const Scores&) = default;
};

struct EvalOptions {
  OverlapRule rule = OverlapRule::AtLeast;
  Weighting weighting = Weighting::PerSequence;
};

Scores score_run(const TrackRun& run, const dataset::Track& gt, const EvalOptions& opts = {});

/// Arithmetic mean over repeated runs of one tracker on one sequence.
Scores aggregate_runs(std::span<const TrackRun> runs, const dataset::Track& gt,
                      const EvalOptions& opts = {});

/// Mean of already-aggregated cells. With PerFrame weighting each cell is
/// weighted by its frame count.
Scores mean_scores(std::span<const Scores> cells, Weighting weighting = Weighting::PerSequence);

struct TrackerReport {
  std::string tracker_id;
  Scores overall;
  std::map<std::string, Scores> per_sequence;
  std::map<dataset::Attribute, Scores> per_attribute;
};

struct AttributeBreakdown {
  /// attribute -> tracker -> scores; attributes with no sequences are absent.
  std::map<dataset::Attribute, std::map<std::string, Scores>> scores;
  /// attribute -> tracker ids by descending success AUC
  std::map<dataset::Attribute, std::vector<std::string>> rankings;
  std::vector<std::string> warnings;
};

/// per_sequence: tracker -> sequence id -> aggregated scores.
AttributeBreakdown attribute_report(
    const std::vector<dataset::SequenceRecord>& sequences,
    const std::map<std::string, std::map<std::string, Scores>>& per_sequence,
    Weighting weighting = Weighting::PerSequence);

struct MetricReport {
  std::vector<TrackerReport> trackers;  ///< by descending overall success AUC
  std::map<dataset::Attribute, std::vector<std::string>> attribute_rankings;
  std::vector<std::string> warnings;
  Weighting weighting = Weighting::PerSequence;
};

/// Full evaluation: every tracker in `runs` must have at least one run on
/// every sequence.
MetricReport evaluate(const std::vector<dataset::SequenceRecord>& sequences,
                      const std::vector<TrackRun>& runs, const EvalOptions& opts = {});

// ---- report files ---------------------------------------------------------

/// Writes report.json, report.csv and curves/<tracker>_<metric>.csv.
void write_report(const std::filesystem::path& dir, const MetricReport& report);
MetricReport read_report_json(const std::filesystem::path& file);

/// Flat `tracker,subset,metric,value` table. `subsets` holds attribute
/// codes; "all" is always emitted first.
std::string report_csv(const MetricReport& report, const std::vector<dataset::Attribute>& subsets);
std::string report_json(const MetricReport& report, const std::vector<dataset::Attribute>& subsets,
                        bool include_sequences = true);

}  // namespace reefloop::metrics
