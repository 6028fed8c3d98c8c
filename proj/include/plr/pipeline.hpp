#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "plr/detection.hpp"
#include "plr/thresholds.hpp"

namespace plr {

struct PseudoLabel {
  BBox box;
  ClassId class_id = 0;
  double confidence = 0.0;  // combined confidence C
  double cls_weight = 0.0;
  double reg_weight = 0.0;
  ImageId source_image_id = 0;

  friend bool operator==(const PseudoLabel&, const PseudoLabel&) = default;
};

struct ImageLabels {
  ImageId image_id = 0;
  std::vector<PseudoLabel> labels;

  friend bool operator==(const ImageLabels&, const ImageLabels&) = default;
};

struct ClassRoundStats {
  std::size_t raw = 0;
  std::size_t accepted = 0;
  double threshold = 0.0;
  ThresholdSource source = ThresholdSource::kFallback;
  bool missing_threshold = false;  // no entry, fallback used

  double acceptance_rate() const {
    return raw == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(raw);
  }
};

struct RoundStats {
  std::uint64_t round = 0;
  std::size_t images = 0;
  std::size_t raw_detections = 0;
  std::size_t accepted = 0;
  std::size_t below_score_floor = 0;  // not pushed into confidence windows
  std::map<ClassId, ClassRoundStats> per_class;
};

struct RefineResult {
  std::vector<ImageLabels> images;
  RoundStats stats;
};

/// Keeps a detection when combined_confidence(max class score, iou_score) is
/// at or above its predicted class's threshold, and attaches the confidence
/// reweighting coefficients. Image order and per-image detection order are
/// preserved; classes without an entry use the fallback threshold.
RefineResult refine(std::span<const ImageDetections> images,
                    const ClassThresholds& thresholds);

/// Mean-teacher parameter average: teacher <- m * teacher + (1 - m) * student.
class EmaState {
 public:
  EmaState(std::vector<double> teacher, double momentum);

  const std::vector<double>& teacher() const { return teacher_; }
  double momentum() const { return momentum_; }
  std::uint64_t step() const { return step_; }

  /// Throws ValidationError on a length mismatch or non-finite input.
  void update(std::span<const double> student);

 private:
  std::vector<double> teacher_;
  double momentum_;
  std::uint64_t step_ = 0;
};

/// Functional form of EmaState::update.
EmaState ema_update(EmaState state, std::span<const double> student);

/// Fixed-capacity FIFO of recent confidences for one class.
class ConfidenceWindow {
 public:
  explicit ConfidenceWindow(std::size_t capacity = 4096);

  void push(double c);
  std::size_t size() const { return values_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::vector<double> snapshot() const { return {values_.begin(), values_.end()}; }

 private:
  std::size_t capacity_;
  std::deque<double> values_;
};

struct PipelineConfig {
  ThresholdConfig thresholds;
  std::size_t window_size = 4096;
  /// Detections with combined confidence below this never enter the windows.
  double score_floor = 0.05;

  void validate() const;
};

struct RoundOutput {
  std::vector<ImageLabels> labels;
  ClassThresholds thresholds;
  RoundStats stats;
};

/// Single-writer state carried across refinement rounds.
class PipelineState {
 public:
  explicit PipelineState(PipelineConfig cfg = {});

  const PipelineConfig& config() const { return cfg_; }
  std::uint64_t rounds_completed() const { return rounds_; }
  const std::map<ClassId, ConfidenceWindow>& windows() const { return windows_; }

  /// Push this round's confidences, refit thresholds, filter, report.
  RoundOutput run_round(std::span<const ImageDetections> teacher_detections);

 private:
  PipelineConfig cfg_;
  std::map<ClassId, ConfidenceWindow> windows_;
  std::uint64_t rounds_ = 0;
};

nlohmann::json labels_to_json(std::span<const ImageLabels> images,
                              const nlohmann::json& meta = nlohmann::json::object());
std::vector<ImageLabels> labels_from_json(const nlohmann::json& doc);

nlohmann::json stats_to_json(const RoundStats& stats,
                             const nlohmann::json& meta = nlohmann::json::object());
RoundStats stats_from_json(const nlohmann::json& j);

}  // namespace plr
