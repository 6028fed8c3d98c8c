#include "plr/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "plr/error.hpp"
#include "plr/text.hpp"

namespace plr {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SimRng::SimRng(std::uint64_t seed) {
  for (auto& s : s_) s = splitmix64(seed);
}

std::uint64_t SimRng::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double SimRng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SimRng::normal(double mean, double stddev) {
  if (spare_) {
    const double z = *spare_;
    spare_.reset();
    return mean + stddev * z;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return mean + stddev * r * std::cos(theta);
}

std::size_t SimRng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

std::size_t SimRng::poisson(double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  std::size_t k = 0;
  double p = uniform();
  while (p > limit) {
    ++k;
    p *= uniform();
  }
  return k;
}

void SimConfig::validate() const {
  if (num_classes == 0) throw ValidationError("simulation needs >= 1 class");
  if (!class_frequencies.empty()) {
    if (class_frequencies.size() != num_classes) {
      throw ValidationError("class_frequencies must have num_classes entries");
    }
    double total = 0.0;
    for (double f : class_frequencies) {
      if (!(f >= 0.0)) throw ValidationError("class frequencies must be >= 0");
      total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("class frequencies must sum to 1");
  } else if (!(frequency_ratio > 0.0)) {
    throw ValidationError("frequency_ratio must be > 0");
  }
  if (!class_bias.empty() && class_bias.size() != num_classes) {
    throw ValidationError("class_bias must have num_classes entries");
  }
  if (min_objects > max_objects) throw ValidationError("min_objects > max_objects");
  if (!(image.width > 0.0 && image.height > 0.0)) throw ValidationError("bad image size");
  if (!(min_box > 0.0 && min_box <= max_box && max_box <= std::min(image.width, image.height))) {
    throw ValidationError("box size range must fit in the image");
  }
  for (double s : {box_noise, score_noise, iou_noise, fp_rate}) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw ValidationError("noise levels and fp_rate must be >= 0");
    }
  }
  if (!(fp_apparent_lo <= fp_apparent_hi)) throw ValidationError("fp apparent range inverted");
}

std::vector<double> SimConfig::frequencies() const {
  if (!class_frequencies.empty()) return class_frequencies;
  std::vector<double> f(num_classes);
  double total = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    f[k] = std::pow(frequency_ratio, static_cast<double>(k));
    total += f[k];
  }
  for (double& x : f) x /= total;
  return f;
}

std::vector<double> SimConfig::biases() const {
  if (!class_bias.empty()) return class_bias;
  const auto freq = frequencies();
  // Rank 0 is the most frequent class.
  std::vector<std::size_t> order(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
  std::vector<double> bias(num_classes, 0.0);
  if (num_classes == 1) return bias;
  for (std::size_t rank = 0; rank < num_classes; ++rank) {
    bias[order[rank]] =
        -max_class_bias * static_cast<double>(rank) / static_cast<double>(num_classes - 1);
  }
  return bias;
}

namespace {

double clip(double x, double lo, double hi) { return std::clamp(x, lo, hi); }

// Minimum score for the emitted class.
constexpr double kMinClassScore = 1e-3;

Detection emit(const BBox& box, ClassId cls, double apparent_iou, double bias,
               const SimConfig& cfg, SimRng& rng) {
  std::vector<double> scores(cfg.num_classes, 0.0);
  scores[static_cast<std::size_t>(cls)] =
      clip(apparent_iou + bias + rng.normal(0.0, cfg.score_noise), kMinClassScore, 1.0);
  const double loc = clip(apparent_iou + bias + rng.normal(0.0, cfg.iou_noise), 0.0, 1.0);
  return Detection::make(box, std::move(scores), loc);
}

BBox random_box(const SimConfig& cfg, SimRng& rng) {
  const double w = rng.uniform(cfg.min_box, cfg.max_box);
  const double h = rng.uniform(cfg.min_box, cfg.max_box);
  const double x = rng.uniform(0.0, cfg.image.width - w);
  const double y = rng.uniform(0.0, cfg.image.height - h);
  return {x, y, x + w, y + h};
}

BBox perturb(const BBox& b, const SimConfig& cfg, SimRng& rng) {
  double x1 = b.x1 + rng.normal(0.0, cfg.box_noise);
  double y1 = b.y1 + rng.normal(0.0, cfg.box_noise);
  double x2 = b.x2 + rng.normal(0.0, cfg.box_noise);
  double y2 = b.y2 + rng.normal(0.0, cfg.box_noise);
  if (x1 > x2) std::swap(x1, x2);
  if (y1 > y2) std::swap(y1, y2);
  x1 = clip(x1, 0.0, cfg.image.width);
  x2 = clip(x2, 0.0, cfg.image.width);
  y1 = clip(y1, 0.0, cfg.image.height);
  y2 = clip(y2, 0.0, cfg.image.height);
  return {x1, y1, x2, y2};
}

}  // namespace

SimScene generate_scene(const SimConfig& cfg, SimRng& rng, ImageId image_id) {
  const auto freq = cfg.frequencies();
  const auto bias = cfg.biases();
  SimScene scene;
  scene.image_id = image_id;
  const std::size_t span = cfg.max_objects - cfg.min_objects + 1;
  const std::size_t n = cfg.min_objects + static_cast<std::size_t>(rng.next() % span);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cls = static_cast<ClassId>(rng.categorical(freq));
    scene.ground_truth.push_back({random_box(cfg, rng), cls});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& gt = scene.ground_truth[i];
    const BBox box = perturb(gt.box, cfg, rng);
    const double true_iou = iou(box, gt.box);
    scene.detections.push_back(
        emit(box, gt.class_id, true_iou, bias[static_cast<std::size_t>(gt.class_id)], cfg, rng));
    scene.source.emplace_back(i);
  }
  const std::size_t fps = rng.poisson(cfg.fp_rate * static_cast<double>(n));
  for (std::size_t i = 0; i < fps; ++i) {
    const auto cls = static_cast<ClassId>(rng.categorical(freq));
    const BBox box = random_box(cfg, rng);
    const double apparent = rng.uniform(cfg.fp_apparent_lo, cfg.fp_apparent_hi);
    scene.detections.push_back(
        emit(box, cls, apparent, bias[static_cast<std::size_t>(cls)], cfg, rng));
    scene.source.emplace_back(std::nullopt);
  }
  return scene;
}

std::vector<SimScene> generate_scenes(const SimConfig& cfg) {
  cfg.validate();
  std::vector<SimScene> scenes;
  scenes.reserve(cfg.scenes);
  std::uint64_t base = cfg.seed;
  const std::uint64_t root = splitmix64(base);
  for (std::size_t i = 0; i < cfg.scenes; ++i) {
    SimRng rng(root ^ (0xD1B54A32D192ED03ULL * (static_cast<std::uint64_t>(i) + 1)));
    scenes.push_back(generate_scene(cfg, rng, static_cast<ImageId>(i)));
  }
  return scenes;
}

std::vector<ImageDetections> scene_detections(std::span<const SimScene> scenes) {
  std::vector<ImageDetections> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back({s.image_id, s.detections});
  return out;
}

std::vector<ImageGroundTruth> scene_ground_truth(std::span<const SimScene> scenes) {
  std::vector<ImageGroundTruth> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back({s.image_id, s.ground_truth});
  return out;
}

std::optional<double> ClassCount::ratio() const {
  if (gt == 0) return std::nullopt;
  return static_cast<double>(pseudo) / static_cast<double>(gt);
}

RatioTable pseudo_gt_ratio(std::span<const ImageLabels> pseudo,
                           std::span<const ImageGroundTruth> gts, std::size_t num_classes) {
  RatioTable table;
  for (std::size_t k = 0; k < num_classes; ++k) table[static_cast<ClassId>(k)];
  std::set<ImageId> ids;
  for (const auto& img : gts) {
    ids.insert(img.image_id);
    for (const auto& o : img.objects) ++table[o.class_id].gt;
  }
  for (const auto& img : pseudo) {
    if (ids.count(img.image_id) == 0) {
      throw ValidationError("pseudo labels reference image " + std::to_string(img.image_id) +
                            " with no ground truth entry");
    }
    for (const auto& l : img.labels) ++table[l.class_id].pseudo;
  }
  return table;
}

RatioTable merge(const RatioTable& a, const RatioTable& b) {
  RatioTable out = a;
  for (const auto& [cls, c] : b) {
    out[cls].pseudo += c.pseudo;
    out[cls].gt += c.gt;
  }
  return out;
}

double PrCounts::precision() const {
  return labels == 0 ? 0.0 : static_cast<double>(true_positives) / static_cast<double>(labels);
}

double PrCounts::recall() const {
  return gt == 0 ? 0.0 : static_cast<double>(true_positives) / static_cast<double>(gt);
}

std::map<ClassId, PrCounts> pr_metrics(std::span<const ImageLabels> pseudo,
                                       std::span<const ImageGroundTruth> gts,
                                       double iou_match_threshold, std::size_t num_classes) {
  std::map<ClassId, PrCounts> out;
  for (std::size_t k = 0; k < num_classes; ++k) out[static_cast<ClassId>(k)];
  std::map<ImageId, const ImageGroundTruth*> by_id;
  for (const auto& img : gts) {
    by_id[img.image_id] = &img;
    for (const auto& o : img.objects) ++out[o.class_id].gt;
  }
  for (const auto& img : pseudo) {
    const auto it = by_id.find(img.image_id);
    const std::vector<GroundTruthObject> none;
    const auto& objects = it == by_id.end() ? none : it->second->objects;
    std::vector<char> used(objects.size(), 0);

    std::vector<std::size_t> order(img.labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return img.labels[a].confidence > img.labels[b].confidence;
    });
    for (std::size_t li : order) {
      const auto& label = img.labels[li];
      auto& counts = out[label.class_id];
      ++counts.labels;
      double best = -1.0;
      std::size_t best_j = objects.size();
      for (std::size_t j = 0; j < objects.size(); ++j) {
        if (used[j] || objects[j].class_id != label.class_id) continue;
        const double v = iou(label.box, objects[j].box);
        if (v >= iou_match_threshold && v > best) {
          best = v;
          best_j = j;
        }
      }
      if (best_j < objects.size()) {
        used[best_j] = 1;
        ++counts.true_positives;
      }
    }
  }
  return out;
}

namespace {

ModeReport summarize(std::span<const ImageLabels> labels, std::span<const ImageGroundTruth> gts,
                     std::size_t num_classes) {
  ModeReport r;
  r.counts = pseudo_gt_ratio(labels, gts, num_classes);
  r.pr = pr_metrics(labels, gts, 0.5, num_classes);
  for (const auto& [cls, c] : r.counts) {
    if (const auto ratio = c.ratio()) {
      r.max_abs_ratio_deviation = std::max(r.max_abs_ratio_deviation, std::abs(*ratio - 1.0));
    }
  }
  return r;
}

}  // namespace

ComparisonReport compare_static_vs_adaptive(const SimConfig& cfg, const PipelineConfig& pipeline,
                                            double static_threshold, std::size_t rounds) {
  cfg.validate();
  if (rounds == 0) throw ValidationError("rounds must be >= 1");
  if (!(static_threshold >= 0.0 && static_threshold <= 1.0)) {
    throw ValidationError("static threshold must lie in [0, 1]");
  }
  const auto scenes = generate_scenes(cfg);
  const auto detections = scene_detections(scenes);
  const auto gts = scene_ground_truth(scenes);

  ComparisonReport report;
  report.scenes = scenes.size();
  report.rounds = rounds;
  report.static_threshold = static_threshold;
  const auto freq = cfg.frequencies();
  report.rare_class = static_cast<ClassId>(
      std::min_element(freq.begin(), freq.end()) - freq.begin());

  const RefineResult fixed = refine(detections, ClassThresholds(static_threshold));
  report.static_mode = summarize(fixed.images, gts, cfg.num_classes);

  PipelineState state(pipeline);
  std::vector<ImageLabels> adaptive;
  adaptive.reserve(scenes.size());
  const std::size_t per_round = (detections.size() + rounds - 1) / rounds;
  for (std::size_t r = 0; r < rounds; ++r) {
    const std::size_t lo = std::min(r * per_round, detections.size());
    const std::size_t hi = std::min(lo + per_round, detections.size());
    RoundOutput out =
        state.run_round(std::span<const ImageDetections>(detections).subspan(lo, hi - lo));
    for (auto& img : out.labels) adaptive.push_back(std::move(img));
    report.final_thresholds = std::move(out.thresholds);
  }
  report.adaptive_mode = summarize(adaptive, gts, cfg.num_classes);
  return report;
}

std::string report_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out << "class_id,mode,ratio,precision,recall\n";
  for (const auto& [cls, count] : report.static_mode.counts) {
    for (const auto* mode : {&report.static_mode, &report.adaptive_mode}) {
      const auto& c = mode->counts.at(cls);
      const auto& pr = mode->pr.at(cls);
      const auto ratio = c.ratio();
      out << cls << ',' << (mode == &report.static_mode ? "static" : "adaptive") << ','
          << (ratio ? format_double(*ratio) : std::string()) << ','
          << format_double(pr.precision()) << ',' << format_double(pr.recall()) << '\n';
    }
  }
  return out.str();
}

nlohmann::json report_summary(const ComparisonReport& report) {
  auto mode_json = [&](const ModeReport& m) {
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [cls, c] : m.counts) {
      const auto& pr = m.pr.at(cls);
      nlohmann::json row = {{"pseudo", c.pseudo},
                            {"gt", c.gt},
                            {"true_positives", pr.true_positives},
                            {"precision", pr.precision()},
                            {"recall", pr.recall()}};
      if (const auto ratio = c.ratio()) row["ratio"] = *ratio;
      classes[std::to_string(cls)] = std::move(row);
    }
    return nlohmann::json{{"max_abs_ratio_deviation", m.max_abs_ratio_deviation},
                          {"classes", std::move(classes)}};
  };
  nlohmann::json thresholds = nlohmann::json::object();
  for (const auto& [cls, e] : report.final_thresholds.entries()) {
    thresholds[std::to_string(cls)] = e.threshold;
  }
  return {{"scenes", report.scenes},
          {"rounds", report.rounds},
          {"static_threshold", report.static_threshold},
          {"rare_class", report.rare_class},
          {"static", mode_json(report.static_mode)},
          {"adaptive", mode_json(report.adaptive_mode)},
          {"final_thresholds", std::move(thresholds)}};
}

}  // namespace plr
