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

namespace plr {

/// One-dimensional Gaussian mixture. Components are kept sorted by mean.
struct GmmParams {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;

  std::size_t size() const { return means.size(); }
  double log_density(double x) const;
  /// Posterior responsibility of every component for sample x; sums to 1.
  std::vector<double> responsibilities(double x) const;
  double log_likelihood(std::span<const double> samples) const;

  friend bool operator==(const GmmParams&, const GmmParams&) = default;
};

struct GmmConfig {
  std::size_t num_components = 2;
  double tol = 1e-6;
  std::size_t max_iter = 100;
  std::size_t min_samples = 8;
  std::size_t restarts = 3;
  double variance_floor = 1e-6;
  /// Samples whose range (max - min) is below this are treated as one point.
  double spread_floor = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EmRun {
  std::vector<double> log_likelihoods;  // one entry per E-step
  bool converged = false;
};

struct GmmFit {
  GmmParams params;
  double log_likelihood = 0.0;
  std::size_t best_run = 0;  // 0 is the median-split start
  std::vector<EmRun> runs;
};

/// EM fit starting from a median split, followed by `restarts` seeded random
/// starts; the run with the highest final log-likelihood wins. Samples are
/// sorted internally so the result does not depend on their order.
/// Throws FallbackNeeded on too few samples or zero spread.
GmmFit fit_gmm_1d(std::span<const double> samples, const GmmConfig& cfg = {});

/// Component with the largest mean; ties go to the larger variance, then the
/// lower index.
std::size_t positive_component(const GmmParams& params);

struct ThresholdOptions {
  /// Reject fits that a single Gaussian explains at least as well (BIC).
  bool require_bimodal = true;
};

/// Smallest sample whose posterior for the positive component exceeds 0.5,
/// considering only samples at or above the next-highest component mean.
/// Throws FallbackNeeded when no sample qualifies or the data look unimodal.
double class_threshold(std::span<const double> samples, const GmmParams& params,
                       const ThresholdOptions& options = {});

enum class ThresholdSource { kFitted, kFallback };

struct ClassThreshold {
  double threshold = 0.5;
  ThresholdSource source = ThresholdSource::kFallback;
  std::optional<GmmParams> gmm;
  std::size_t sample_count = 0;
  std::string fallback_reason;  // empty when fitted

  friend bool operator==(const ClassThreshold&, const ClassThreshold&) = default;
};

struct ThresholdConfig {
  GmmConfig gmm;
  ThresholdOptions options;
  double fallback = 0.5;

  void validate() const;
};

class ClassThresholds {
 public:
  ClassThresholds() = default;
  explicit ClassThresholds(double fallback) : fallback_(fallback) {}

  double fallback() const { return fallback_; }
  const std::map<ClassId, ClassThreshold>& entries() const { return entries_; }
  void set(ClassId cls, ClassThreshold t) { entries_[cls] = std::move(t); }
  bool contains(ClassId cls) const { return entries_.count(cls) != 0; }
  /// Threshold for cls, or the fallback when the class has no entry.
  double threshold_for(ClassId cls) const;

  friend bool operator==(const ClassThresholds&, const ClassThresholds&) = default;

 private:
  double fallback_ = 0.5;
  std::map<ClassId, ClassThreshold> entries_;
};

/// Fits every class independently; failures degrade to the fallback and the
/// reason is recorded. The per-class seed is derived from cfg.gmm.seed.
ClassThresholds fit_all_thresholds(
    const std::map<ClassId, std::vector<double>>& per_class_samples,
    const ThresholdConfig& cfg = {});

/// {"<class_id>": {threshold, source, pi[], mu[], sigma2[]}, "meta": {...}}.
nlohmann::json thresholds_to_json(const ClassThresholds& t,
                                  const nlohmann::json& meta = nlohmann::json::object());
ClassThresholds thresholds_from_json(const nlohmann::json& doc);

}  // namespace plr
