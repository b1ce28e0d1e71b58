#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "../support/oracles.hpp"
#include "../support/tempdir.hpp"
#include "reefloop/metrics.hpp"

using namespace reefloop;
using namespace reefloop::metrics;
using dataset::Attribute;
using dataset::Track;

namespace {

TrackRun make_run(std::vector<BBox> boxes, std::string seq = "s", std::string tracker = "t",
                  std::size_t index = 0) {
  TrackRun r;
  r.sequence_id = std::move(seq);
  r.tracker_id = std::move(tracker);
  r.run_index = index;
  r.boxes = std::move(boxes);
  return r;
}

Track random_track(std::mt19937_64& rng, std::size_t n) {
  Track t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(testing::random_box(rng, 300, 80));
  return t;
}

/// Jittered copy of gt with some empty frames.
std::vector<BBox> noisy_run(std::mt19937_64& rng, const Track& gt) {
  std::normal_distribution<double> n(0.0, 12.0);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<BBox> out;
  for (const auto& g : gt) {
    if (u(rng) < 0.05) {
      out.push_back(BBox::empty());
      continue;
    }
    out.push_back({g.x + n(rng), g.y + n(rng), std::max(1.0, g.w + n(rng)), std::max(1.0, g.h + n(rng))});
  }
  return out;
}

dataset::SequenceRecord seq(std::string id, Track track, std::initializer_list<Attribute> attrs = {}) {
  dataset::SequenceRecord s;
  s.id = std::move(id);
  s.track = std::move(track);
  s.resolution = {854, 480};
  for (auto a : attrs) s.attributes.set(a);
  return s;
}

}  // namespace

TEST_CASE("threshold grids") {
  const auto s = success_thresholds();
  REQUIRE(s.size() == 21);
  CHECK(s.front() == 0.0);
  CHECK(s.back() == 1.0);
  CHECK(s[10] == 0.5);
  const auto p = precision_thresholds();
  REQUIRE(p.size() == 51);
  CHECK(p[20] == 20.0);
  const auto n = normalized_precision_thresholds();
  REQUIRE(n.size() == 51);
  CHECK(n.back() == 0.5);
}

TEST_CASE("success curve examples") {
  const Track gt(4, BBox{0, 0, 10, 10});
  const auto perfect = success_curve(make_run(gt), gt);
  for (double v : perfect.values) CHECK(v == 1.0);
  CHECK(perfect.auc == 1.0);

  const Track gt3(3, BBox{0, 0, 10, 10});
  // IoUs 1.0, 0.4, 0.6
  const auto c = success_curve(make_run({{0, 0, 10, 10}, {0, 0, 10, 4}, {0, 0, 10, 6}}), gt3);
  CHECK(c.values[10] == doctest::Approx(2.0 / 3.0));

  const auto empty = success_curve(make_run(std::vector<BBox>(4, BBox::empty())), gt);
  CHECK(empty.values[0] == 1.0);
  for (std::size_t i = 1; i < 21; ++i) CHECK(empty.values[i] == 0.0);
  CHECK(empty.auc == 1.0 / 21.0);

  CHECK_THROWS_AS(success_curve(make_run({{0, 0, 1, 1}}), gt), MetricsError);
}

TEST_CASE("strict overlap rule caps a perfect tracker") {
  const Track gt(4, BBox{0, 0, 10, 10});
  const auto c = success_curve(make_run(gt), gt, OverlapRule::Exceeds);
  CHECK(c.values.back() == 0.0);
  CHECK(c.values[19] == 1.0);
}

TEST_CASE("precision examples") {
  const Track gt(3, BBox{100, 100, 10, 10});
  const auto all5 = precision_score(make_run(Track(3, BBox{103, 104, 10, 10})), gt);
  CHECK(all5.score == 1.0);

  // center errors 5, 25, 15 px
  const auto mixed =
      precision_score(make_run({{103, 104, 10, 10}, {125, 100, 10, 10}, {100, 115, 10, 10}}), gt);
  CHECK(mixed.score == doctest::Approx(2.0 / 3.0));

  const auto perfect = precision_score(make_run(gt), gt);
  for (double v : perfect.values) CHECK(v == 1.0);

  CHECK_THROWS_AS(precision_score(make_run({}), gt), MetricsError);
}

TEST_CASE("normalized precision examples") {
  const Track gt(5, BBox{0, 0, 50, 25});
  CHECK(normalized_precision_score(make_run(gt), gt).auc == 1.0);

  const auto c = normalized_precision_score(make_run(Track(5, translated(gt[0], 5, 5))), gt);
  // 0.2236 error: zero below, one from 0.23 onwards -> 28 of 51 grid points
  CHECK(c.values[22] == 0.0);
  CHECK(c.values[23] == 1.0);
  CHECK(c.auc == doctest::Approx(28.0 / 51.0));

  CHECK(normalized_precision_score(make_run(std::vector<BBox>(5, BBox::empty())), gt).auc == 0.0);
}

TEST_CASE("curves match brute-force counting and satisfy invariants") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const Track gt = random_track(rng, 60);
    TrackRun run = make_run(noisy_run(rng, gt));
    const auto sc = success_curve(run, gt);
    const auto pc = precision_score(run, gt);
    const auto nc = normalized_precision_score(run, gt);

    std::vector<double> ious, dists;
    for (std::size_t t = 0; t < gt.size(); ++t) {
      ious.push_back(testing::longhand_iou(run.boxes[t], gt[t]));
      dists.push_back(testing::longhand_center_distance(run.boxes[t], gt[t]));
    }
    for (int i = 0; i <= 20; ++i)
      CHECK(sc.values[i] == testing::count_fraction(ious, [&](double v) { return v >= i / 20.0; }));
    for (std::size_t d = 0; d <= 50; ++d)
      CHECK(pc.values[d] == testing::count_fraction(dists, [&](double v) { return v <= double(d); }));

    for (std::size_t i = 1; i < 21; ++i) CHECK(sc.values[i] <= sc.values[i - 1]);
    for (std::size_t i = 1; i < 51; ++i) {
      CHECK(pc.values[i] >= pc.values[i - 1]);
      CHECK(nc.values[i] >= nc.values[i - 1]);
    }
    CHECK(sc.auc == std::accumulate(sc.values.begin(), sc.values.end(), 0.0) / 21.0);
    CHECK(sc.auc >= 0.0);
    CHECK(sc.auc <= 1.0);
    // Under the >= rule every frame, empty or not, passes tau = 0.
    CHECK(sc.values[0] == 1.0);

    // frame order does not matter
    Track gt_perm = gt;
    TrackRun run_perm = run;
    std::vector<std::size_t> idx(gt.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      gt_perm[k] = gt[idx[k]];
      run_perm.boxes[k] = run.boxes[idx[k]];
    }
    CHECK(score_run(run_perm, gt_perm) == score_run(run, gt));
  }
}

TEST_CASE("fps statistics") {
  TrackRun r = make_run({});
  r.latencies_ms.assign(10, 100.0);
  CHECK(fps_stats(r).mean_fps == doctest::Approx(10.0));
  r.latencies_ms = {50.0, 150.0};
  const auto s = fps_stats(r);
  CHECK(s.mean_fps == doctest::Approx(10.0));
  CHECK(s.median_latency_ms == 100.0);
  CHECK(s.p95_latency_ms == 150.0);

  // 111-143 ms latencies land in the 7-9 fps band
  r.latencies_ms.clear();
  for (int ms = 111; ms <= 143; ++ms) r.latencies_ms.push_back(ms);
  const double fps = fps_stats(r).mean_fps;
  CHECK(fps == doctest::Approx(1000.0 / 127.0));
  CHECK(fps >= 7.0);
  CHECK(fps <= 9.0);

  r.latencies_ms.clear();
  CHECK_THROWS_AS(fps_stats(r), MetricsError);
}

TEST_CASE("aggregate_runs") {
  std::mt19937_64 rng(4);
  const Track gt = random_track(rng, 40);
  const TrackRun one = make_run(noisy_run(rng, gt));
  std::vector<TrackRun> five(5, one);
  for (std::size_t i = 0; i < 5; ++i) five[i].run_index = i;
  const Scores agg = aggregate_runs(five, gt);
  const Scores single = score_run(one, gt);
  CHECK(agg.success == single.success);
  CHECK(agg.success_auc == single.success_auc);
  CHECK(agg.precision_20px == single.precision_20px);
  CHECK(agg.runs == 5);

  // pointwise mean equals pooled indicator counting
  std::vector<TrackRun> runs;
  for (std::size_t i = 0; i < 5; ++i) runs.push_back(make_run(noisy_run(rng, gt), "s", "t", i));
  const Scores mean = aggregate_runs(runs, gt);
  const auto taus = success_thresholds();
  for (std::size_t i = 0; i < taus.size(); ++i) {
    std::size_t hits = 0;
    for (const auto& r : runs)
      for (std::size_t t = 0; t < gt.size(); ++t) hits += testing::longhand_iou(r.boxes[t], gt[t]) >= taus[i];
    CHECK(mean.success[i] == doctest::Approx(double(hits) / double(runs.size() * gt.size())).epsilon(1e-12));
  }
  for (std::size_t d = 0; d <= 50; ++d) {
    std::size_t hits = 0;
    for (const auto& r : runs)
      for (std::size_t t = 0; t < gt.size(); ++t)
        hits += testing::longhand_center_distance(r.boxes[t], gt[t]) <= double(d);
    CHECK(mean.precision[d] == doctest::Approx(double(hits) / double(runs.size() * gt.size())).epsilon(1e-12));
  }

  std::vector<TrackRun> mixed = {make_run(gt, "a"), make_run(gt, "b")};
  CHECK_THROWS_AS(aggregate_runs(mixed, gt), MetricsError);
  CHECK_THROWS_AS(aggregate_runs(std::vector<TrackRun>{}, gt), MetricsError);
}

TEST_CASE("mean of AUCs") {
  Scores a, b;
  a.success.assign(21, 0.0);
  b.success.assign(21, 0.0);
  a.success_auc = 0.4;
  b.success_auc = 0.6;
  a.frames = 10;
  b.frames = 30;
  const std::vector<Scores> cells{a, b};
  CHECK(mean_scores(cells).success_auc == doctest::Approx(0.5));
  CHECK(mean_scores(cells, Weighting::PerFrame).success_auc == doctest::Approx(0.55));
}

TEST_CASE("attribute report") {
  Scores a, b;
  a.success.assign(21, 0.4);
  a.success_auc = 0.4;
  b.success.assign(21, 0.8);
  b.success_auc = 0.8;
  const std::vector<dataset::SequenceRecord> seqs{
      seq("A", Track(3, BBox{0, 0, 5, 5}), {Attribute::SV, Attribute::MW}),
      seq("B", Track(3, BBox{0, 0, 5, 5}), {Attribute::MW})};
  const std::map<std::string, std::map<std::string, Scores>> per_seq{{"t", {{"A", a}, {"B", b}}}};
  const auto rep = attribute_report(seqs, per_seq);
  CHECK(rep.scores.at(Attribute::SV).at("t").success_auc == 0.4);
  CHECK(rep.scores.at(Attribute::MW).at("t").success_auc == doctest::Approx(0.6));
  CHECK_FALSE(rep.scores.contains(Attribute::CR));
  CHECK(rep.warnings.size() == 11);  // all but SV and MW are empty
}

TEST_CASE("evaluate: per-attribute means match an independent recount") {
  std::mt19937_64 rng(99);
  std::vector<dataset::SequenceRecord> seqs;
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 6; ++i) {
    auto s = seq("seq" + std::to_string(i), random_track(rng, 30 + 5 * i), {Attribute::MW});
    if (coin(rng)) s.attributes.set(Attribute::PO);
    if (coin(rng)) s.attributes.set(Attribute::DB);
    seqs.push_back(s);
  }
  seqs[0].attributes.set(Attribute::PO);

  std::vector<TrackRun> runs;
  for (const std::string tracker : {"alpha", "beta"})
    for (const auto& s : seqs)
      for (std::size_t k = 0; k < 3; ++k) runs.push_back(make_run(noisy_run(rng, s.track), s.id, tracker, k));

  const MetricReport rep = evaluate(seqs, runs);
  REQUIRE(rep.trackers.size() == 2);

  for (const auto& tr : rep.trackers) {
    // MW covers every sequence -> same as overall
    CHECK(tr.per_attribute.at(Attribute::MW).success_auc == doctest::Approx(tr.overall.success_auc).epsilon(1e-14));

    for (const auto& [attr, scores] : tr.per_attribute) {
      double sum = 0.0;
      int n = 0;
      for (const auto& s : seqs) {
        if (!s.attributes.get(attr)) continue;
        double seq_sum = 0.0;
        int nruns = 0;
        for (const auto& r : runs) {
          if (r.tracker_id != tr.tracker_id || r.sequence_id != s.id) continue;
          std::vector<double> ious;
          for (std::size_t t = 0; t < s.track.size(); ++t) ious.push_back(testing::longhand_iou(r.boxes[t], s.track[t]));
          double auc = 0.0;
          for (int i = 0; i <= 20; ++i)
            auc += testing::count_fraction(ious, [&](double v) { return v >= i / 20.0; });
          seq_sum += auc / 21.0;
          ++nruns;
        }
        sum += seq_sum / nruns;
        ++n;
      }
      CHECK(scores.success_auc == doctest::Approx(sum / n).epsilon(1e-12));
      CHECK(scores.sequences == std::size_t(n));
    }
  }

  // a tracker missing a sequence is rejected
  runs.push_back(make_run(seqs[0].track, seqs[0].id, "gamma"));
  CHECK_THROWS_AS(evaluate(seqs, runs), MetricsError);
}

TEST_CASE("dataset-level AUC is the unweighted mean of per-sequence AUCs") {
  std::mt19937_64 rng(5);
  std::vector<dataset::SequenceRecord> seqs{seq("a", random_track(rng, 10)), seq("b", random_track(rng, 90))};
  std::vector<TrackRun> runs{make_run(noisy_run(rng, seqs[0].track), "a"),
                             make_run(noisy_run(rng, seqs[1].track), "b")};
  const auto rep = evaluate(seqs, runs);
  const auto& tr = rep.trackers[0];
  CHECK(tr.overall.success_auc ==
        doctest::Approx((tr.per_sequence.at("a").success_auc + tr.per_sequence.at("b").success_auc) / 2));

  const auto weighted = evaluate(seqs, runs, {OverlapRule::AtLeast, Weighting::PerFrame});
  CHECK(weighted.trackers[0].overall.success_auc ==
        doctest::Approx((10 * tr.per_sequence.at("a").success_auc + 90 * tr.per_sequence.at("b").success_auc) / 100));
}

TEST_CASE("report files") {
  std::mt19937_64 rng(8);
  std::vector<dataset::SequenceRecord> seqs{seq("a", random_track(rng, 20), {Attribute::SV}),
                                            seq("b", random_track(rng, 20), {Attribute::CR, Attribute::SB})};
  std::vector<TrackRun> runs;
  for (const std::string t : {"ncc", "bridge:tcp:localhost:9000"})
    for (const auto& s : seqs) {
      auto r = make_run(noisy_run(rng, s.track), s.id, t);
      r.latencies_ms.assign(s.track.size(), 20.0);
      runs.push_back(r);
    }
  const auto rep = evaluate(seqs, runs);
  testing::TempDir dir;
  write_report(dir.path(), rep);

  std::ifstream curve(dir / "curves/ncc_success.csv");
  std::string line;
  int rows = 0;
  std::getline(curve, line);
  CHECK(line == "threshold,value");
  while (std::getline(curve, line)) ++rows;
  CHECK(rows == 21);
  CHECK(std::filesystem::exists(dir / "curves/bridge_tcp_localhost_9000_precision.csv"));

  const std::string csv = report_csv(rep, {});
  CHECK(csv.find("ncc,all,success_auc,") != std::string::npos);
  CHECK(csv.find("ncc,all,precision_20px,") != std::string::npos);
  CHECK(csv.find("ncc,all,norm_precision_auc,") != std::string::npos);
  CHECK(csv.find("ncc,all,mean_fps,50") != std::string::npos);
  CHECK(report_csv(rep, {Attribute::SV}).find("ncc,SV,success_auc,") != std::string::npos);

  const MetricReport back = read_report_json(dir / "report.json");
  REQUIRE(back.trackers.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.trackers[i].tracker_id == rep.trackers[i].tracker_id);
    CHECK(back.trackers[i].overall == rep.trackers[i].overall);
    CHECK(back.trackers[i].per_attribute == rep.trackers[i].per_attribute);
    CHECK(back.trackers[i].per_sequence == rep.trackers[i].per_sequence);
  }
  CHECK(back.attribute_rankings == rep.attribute_rankings);
}
