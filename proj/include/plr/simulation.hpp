#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "plr/detection.hpp"
#include "plr/pipeline.hpp"

namespace plr {

/// Deterministic generator: splitmix64-seeded xoshiro256** with Box-Muller
/// normals, so streams are identical across standard libraries.
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed);

  std::uint64_t next();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean, double stddev);
  /// Index drawn from a discrete distribution given by nonnegative weights.
  std::size_t categorical(std::span<const double> weights);
  std::size_t poisson(double mean);

 private:
  std::uint64_t s_[4];
  std::optional<double> spare_;
};

struct SimConfig {
  std::size_t num_classes = 8;
  /// Geometric class frequencies f_k proportional to ratio^k. Ignored when
  /// class_frequencies is non-empty.
  double frequency_ratio = 0.6;
  std::vector<double> class_frequencies;

  std::size_t min_objects = 3;
  std::size_t max_objects = 12;
  ImageSize image{1024.0, 512.0};
  double min_box = 32.0;
  double max_box = 160.0;
  double box_noise = 3.0;  // pixels, per corner coordinate

  /// Score bias grows linearly with frequency rank, from 0 for the most
  /// frequent class to -max_class_bias for the rarest. Ignored when
  /// class_bias is non-empty.
  double max_class_bias = 0.4;
  std::vector<double> class_bias;
  double score_noise = 0.05;
  double iou_noise = 0.05;

  /// Expected spurious detections per ground-truth object; their class follows
  /// the class frequencies.
  double fp_rate = 0.5;
  double fp_apparent_lo = 0.25;  // apparent-IoU range fed to the calibration
  double fp_apparent_hi = 0.65;

  std::size_t scenes = 2000;
  std::uint64_t seed = 7;

  void validate() const;
  std::vector<double> frequencies() const;  // normalized
  std::vector<double> biases() const;
};

struct SimScene {
  ImageId image_id = 0;
  std::vector<GroundTruthObject> ground_truth;
  std::vector<Detection> detections;
  /// Ground-truth index for each detection; nullopt marks a false positive.
  std::vector<std::optional<std::size_t>> source;
};

SimScene generate_scene(const SimConfig& cfg, SimRng& rng, ImageId image_id = 0);

/// cfg.scenes scenes; scene i draws from its own stream derived from
/// (cfg.seed, i).
std::vector<SimScene> generate_scenes(const SimConfig& cfg);

std::vector<ImageDetections> scene_detections(std::span<const SimScene> scenes);
std::vector<ImageGroundTruth> scene_ground_truth(std::span<const SimScene> scenes);

struct ClassCount {
  std::size_t pseudo = 0;
  std::size_t gt = 0;
  /// pseudo / gt; nullopt when the class has no ground truth.
  std::optional<double> ratio() const;
};

using RatioTable = std::map<ClassId, ClassCount>;

/// Per-class pseudo-label and ground-truth counts. Every pseudo-label image id
/// must appear in `gts`. Classes listed up to num_classes are always present.
RatioTable pseudo_gt_ratio(std::span<const ImageLabels> pseudo,
                           std::span<const ImageGroundTruth> gts,
                           std::size_t num_classes = 0);

/// Shard-and-merge helper: counts add.
RatioTable merge(const RatioTable& a, const RatioTable& b);

struct PrCounts {
  std::size_t true_positives = 0;
  std::size_t labels = 0;
  std::size_t gt = 0;
  double precision() const;  // 0 when there are no labels
  double recall() const;     // 0 when there is no ground truth
};

/// Greedy per-image, per-class matching in descending confidence order; each
/// label claims the unmatched ground truth with the highest IoU at or above
/// the threshold.
std::map<ClassId, PrCounts> pr_metrics(std::span<const ImageLabels> pseudo,
                                       std::span<const ImageGroundTruth> gts,
                                       double iou_match_threshold = 0.5,
                                       std::size_t num_classes = 0);

struct ModeReport {
  RatioTable counts;
  std::map<ClassId, PrCounts> pr;
  double max_abs_ratio_deviation = 0.0;
};

struct ComparisonReport {
  std::size_t scenes = 0;
  std::size_t rounds = 0;
  double static_threshold = 0.5;
  ClassId rare_class = 0;
  ModeReport static_mode;
  ModeReport adaptive_mode;
  ClassThresholds final_thresholds;  // adaptive thresholds after the last round
};

/// Runs identical scenes through a static threshold and through the adaptive
/// pipeline (scenes split into `rounds` consecutive batches).
ComparisonReport compare_static_vs_adaptive(const SimConfig& cfg,
                                            const PipelineConfig& pipeline,
                                            double static_threshold = 0.5,
                                            std::size_t rounds = 10);

/// CSV: class_id,mode,ratio,precision,recall (ratio empty for absent classes).
std::string report_csv(const ComparisonReport& report);
nlohmann::json report_summary(const ComparisonReport& report);

}  // namespace plr
