#include <doctest.h>

#include <cmath>

#include "plr/error.hpp"
#include "plr/simulation.hpp"

namespace {

plr::ImageLabels labels_from(const plr::ImageGroundTruth& g) {
  plr::ImageLabels il{g.image_id, {}};
  for (const auto& o : g.objects) il.labels.push_back({o.box, o.class_id, 1.0, 2.0, 1.0, g.image_id});
  return il;
}

}  // namespace

TEST_CASE("noiseless scene reproduces ground truth") {
  plr::SimConfig cfg;
  cfg.box_noise = 0;
  cfg.fp_rate = 0;
  cfg.max_class_bias = 0;
  cfg.score_noise = 0;
  cfg.iou_noise = 0;
  plr::SimRng rng(3);
  const auto s = plr::generate_scene(cfg, rng, 11);
  CHECK(s.image_id == 11);
  REQUIRE(s.detections.size() == s.ground_truth.size());
  for (std::size_t i = 0; i < s.detections.size(); ++i) {
    REQUIRE(s.source[i].has_value());
    const auto& gt = s.ground_truth[*s.source[i]];
    CHECK(s.detections[i].box == gt.box);
    CHECK(s.detections[i].iou_score == 1.0);
    CHECK(s.detections[i].predicted_class == gt.class_id);
  }
}

TEST_CASE("scenes are deterministic per seed") {
  plr::SimConfig cfg;
  cfg.scenes = 50;
  const auto a = plr::generate_scenes(cfg);
  const auto b = plr::generate_scenes(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].ground_truth == b[i].ground_truth);
    CHECK(a[i].detections == b[i].detections);
    CHECK(a[i].source == b[i].source);
  }
  cfg.seed = 8;
  const auto c = plr::generate_scenes(cfg);
  CHECK_FALSE(c[0].detections == a[0].detections);
}

TEST_CASE("rng streams are fixed") {
  plr::SimRng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  plr::SimRng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("ground-truth class frequencies follow the config") {
  plr::SimConfig cfg;
  cfg.scenes = 10000;
  const auto scenes = plr::generate_scenes(cfg);
  const auto freq = cfg.frequencies();
  double sum = 0;
  for (double f : freq) sum += f;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> counts(cfg.num_classes, 0.0);
  double total = 0;
  for (const auto& s : scenes) {
    for (const auto& o : s.ground_truth) {
      counts[static_cast<std::size_t>(o.class_id)] += 1;
      total += 1;
    }
    for (std::size_t i = 0; i < s.detections.size(); ++i) {
      if (s.source[i]) CHECK(*s.source[i] < s.ground_truth.size());
    }
  }
  for (std::size_t k = 0; k < counts.size(); ++k) CHECK(std::abs(counts[k] / total - freq[k]) <= 0.02);
}

TEST_CASE("config validation") {
  plr::SimConfig cfg;
  cfg.box_noise = -1;
  CHECK_THROWS_AS(cfg.validate(), plr::ValidationError);
  cfg = {};
  cfg.class_frequencies = {0.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), plr::ValidationError);
}

TEST_CASE("pseudo to ground-truth ratio") {
  std::vector<plr::ImageGroundTruth> gts{
      {0, {{{0, 0, 10, 10}, 0}, {{20, 0, 30, 10}, 0}, {{0, 20, 10, 30}, 1}}},
      {1, {{{0, 0, 10, 10}, 1}}}};
  std::vector<plr::ImageLabels> same;
  for (const auto& g : gts) same.push_back(labels_from(g));
  for (const auto& [c, cc] : plr::pseudo_gt_ratio(same, gts)) CHECK(*cc.ratio() == 1.0);

  const auto empty = plr::pseudo_gt_ratio(std::vector<plr::ImageLabels>{}, gts, 3);
  CHECK(*empty.at(0).ratio() == 0.0);
  CHECK(*empty.at(1).ratio() == 0.0);
  CHECK_FALSE(empty.at(2).ratio().has_value());

  // majority class over-accepted 2:1
  auto doubled = same;
  for (auto& il : doubled) {
    const auto copy = il.labels;
    for (const auto& l : copy)
      if (l.class_id == 0) il.labels.push_back(l);
  }
  const auto d = plr::pseudo_gt_ratio(doubled, gts);
  CHECK(*d.at(0).ratio() == 2.0);
  CHECK(*d.at(1).ratio() == 1.0);

  std::vector<plr::ImageLabels> stray{{9, {}}};
  CHECK_THROWS_AS(plr::pseudo_gt_ratio(stray, gts), plr::ValidationError);
}

TEST_CASE("ratio counts merge across shards") {
  plr::SimConfig cfg;
  cfg.scenes = 200;
  const auto scenes = plr::generate_scenes(cfg);
  const auto gts = plr::scene_ground_truth(scenes);
  std::vector<plr::ImageLabels> labels;
  for (const auto& g : gts) labels.push_back(labels_from(g));
  for (auto& il : labels)
    if (!il.labels.empty() && il.image_id % 3 == 0) il.labels.pop_back();
  const auto whole = plr::pseudo_gt_ratio(labels, gts, cfg.num_classes);
  const std::span<const plr::ImageLabels> ls(labels);
  const std::span<const plr::ImageGroundTruth> gs(gts);
  const auto a = plr::pseudo_gt_ratio(ls.first(77), gs.first(77), cfg.num_classes);
  const auto b = plr::pseudo_gt_ratio(ls.subspan(77), gs.subspan(77), cfg.num_classes);
  const auto merged = plr::merge(a, b);
  REQUIRE(merged.size() == whole.size());
  for (const auto& [c, cc] : whole) {
    CHECK(merged.at(c).pseudo == cc.pseudo);
    CHECK(merged.at(c).gt == cc.gt);
  }
}

TEST_CASE("precision and recall") {
  std::vector<plr::ImageGroundTruth> gts{
      {0, {{{0, 0, 10, 10}, 0}, {{20, 0, 30, 10}, 0}, {{40, 0, 50, 10}, 0}, {{60, 0, 70, 10}, 0}}}};
  std::vector<plr::ImageLabels> exact{labels_from(gts[0])};
  auto pr = plr::pr_metrics(exact, gts);
  CHECK(pr.at(0).precision() == 1.0);
  CHECK(pr.at(0).recall() == 1.0);

  std::vector<plr::ImageLabels> half{labels_from(gts[0])};
  half[0].labels.resize(2);
  pr = plr::pr_metrics(half, gts);
  CHECK(pr.at(0).precision() == 1.0);
  CHECK(pr.at(0).recall() == 0.5);
  CHECK(pr.at(0).true_positives == 2);

  std::vector<plr::ImageLabels> spurious{{0, {{{100, 100, 110, 110}, 0, 0.9, 0, 0, 0},
                                              {{0, 0, 10, 10}, 1, 0.9, 0, 0, 0}}}};
  pr = plr::pr_metrics(spurious, gts);
  CHECK(pr.at(0).precision() == 0.0);
  CHECK(pr.at(1).precision() == 0.0);
  CHECK(pr.at(0).recall() == 0.0);

  // duplicates: only one claims the object
  std::vector<plr::ImageLabels> dup{{0, {{{0, 0, 10, 10}, 0, 0.5, 0, 0, 0}, {{0, 0, 10, 11}, 0, 0.9, 0, 0, 0}}}};
  pr = plr::pr_metrics(dup, gts);
  CHECK(pr.at(0).true_positives == 1);
  CHECK(pr.at(0).precision() == 0.5);
  CHECK(pr.at(0).recall() * 4 == 1.0);
  CHECK(plr::PrCounts{}.precision() == 0.0);
}

TEST_CASE("long-tailed bias: adaptive thresholds track ground truth more closely") {
  plr::SimConfig cfg;
  cfg.scenes = 600;
  const auto r = plr::compare_static_vs_adaptive(cfg, {}, 0.5, 5);
  CHECK(r.adaptive_mode.max_abs_ratio_deviation < r.static_mode.max_abs_ratio_deviation);
  CHECK(r.rare_class == static_cast<plr::ClassId>(cfg.num_classes - 1));
  CHECK(r.adaptive_mode.pr.at(r.rare_class).recall() > r.static_mode.pr.at(r.rare_class).recall());
  for (const auto* m : {&r.static_mode, &r.adaptive_mode}) {
    for (const auto& [c, p] : m->pr) {
      CHECK(p.precision() >= 0.0);
      CHECK(p.precision() <= 1.0);
      CHECK(p.recall() >= 0.0);
      CHECK(p.recall() <= 1.0);
      CHECK(p.true_positives <= p.gt);
    }
  }
  const auto csv = plr::report_csv(r);
  CHECK(csv.rfind("class_id,mode,ratio,precision,recall\n", 0) == 0);
  const auto summary = plr::report_summary(r);
  CHECK(summary.contains("static"));
  CHECK(summary.contains("adaptive"));
}

TEST_CASE("reports are reproducible") {
  plr::SimConfig cfg;
  cfg.scenes = 150;
  const auto a = plr::compare_static_vs_adaptive(cfg, {}, 0.5, 3);
  const auto b = plr::compare_static_vs_adaptive(cfg, {}, 0.5, 3);
  CHECK(plr::report_csv(a) == plr::report_csv(b));
  CHECK(plr::report_summary(a) == plr::report_summary(b));
}

TEST_CASE("balanced unbiased classes: both modes agree") {
  plr::SimConfig cfg;
  cfg.num_classes = 4;
  cfg.frequency_ratio = 1.0;
  cfg.max_class_bias = 0.0;
  cfg.scenes = 800;
  const auto probe = plr::compare_static_vs_adaptive(cfg, {}, 0.5, 5);
  double lo = 1, hi = 0;
  for (const auto& [c, e] : probe.final_thresholds.entries()) {
    lo = std::min(lo, e.threshold);
    hi = std::max(hi, e.threshold);
  }
  CHECK(hi - lo < 0.02);
  // static threshold placed at the shared score valley
  const auto r = plr::compare_static_vs_adaptive(cfg, {}, 0.5 * (lo + hi), 5);
  for (const auto& [c, cc] : r.static_mode.counts) {
    CHECK(std::abs(*cc.ratio() - *r.adaptive_mode.counts.at(c).ratio()) < 0.05);
  }
}

TEST_CASE("single-class simulation") {
  plr::SimConfig cfg;
  cfg.num_classes = 1;
  cfg.scenes = 500;
  const auto r = plr::compare_static_vs_adaptive(cfg, {}, 0.5, 5);
  REQUIRE(r.final_thresholds.contains(0));
  const auto& e = r.final_thresholds.entries().at(0);
  CHECK(e.source == plr::ThresholdSource::kFitted);
  // true positives centre near 0.9 and false positives near 0.45
  CHECK(e.threshold > 0.6);
  CHECK(e.threshold < 0.85);
  CHECK(r.adaptive_mode.counts.size() == 1);
  CHECK(r.adaptive_mode.max_abs_ratio_deviation < 0.1);
}
