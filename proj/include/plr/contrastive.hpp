#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "plr/detection.hpp"
#include "plr/geometry.hpp"

namespace plr {

enum class FeatureRole { kAnchor, kCandidate };

/// Pooled object embedding. `feature` is unit-norm when produced by
/// extract_object_features.
struct ObjectFeature {
  std::size_t object_id = 0;
  ClassId class_id = 0;
  double confidence = 0.0;
  FeatureRole role = FeatureRole::kAnchor;
  std::vector<double> feature;

  friend bool operator==(const ObjectFeature&, const ObjectFeature&) = default;
};

enum class DenominatorMode {
  kAsWritten,  // different-class candidates only
  kStandard,   // every candidate
};

struct ContrastiveConfig {
  double temperature = 0.07;
  double threshold_exponent = 0.5;
  DenominatorMode denominator = DenominatorMode::kAsWritten;

  void validate() const;
};

struct WeightInput {
  double confidence = 0.0;       // combined confidence of the object
  double class_threshold = 0.0;  // adaptive threshold of its predicted class
};

/// w_i proportional to (1 + e^(C_i - 1)) * (1 - tau_i^exponent), normalized to
/// sum to 1. Throws ValidationError when the input is empty, a threshold lies
/// outside [0, 1), or every raw weight is zero.
std::vector<double> contrastive_weights(std::span<const WeightInput> objects,
                                        double threshold_exponent = 0.5);

struct SupConResult {
  double loss = 0.0;
  std::size_t anchors_used = 0;
  std::size_t skipped_no_positive = 0;
  std::size_t skipped_no_negative = 0;
};

/// Weighted supervised contrastive loss summed over anchors. P(i) is the set
/// of candidates sharing the anchor's class; the denominator runs over
/// different-class candidates (as-written) or all candidates (standard).
/// Anchors with an empty P(i), or an empty A(i) in as-written mode, are
/// skipped and counted. `weights` is indexed like `anchors` and must be > 0.
/// Throws ValidationError when no anchor is usable.
SupConResult supcon_loss(std::span<const ObjectFeature> anchors,
                         std::span<const ObjectFeature> candidates,
                         std::span<const double> weights,
                         const ContrastiveConfig& cfg = {});

struct SupConGradient {
  SupConResult value;
  std::vector<std::vector<double>> anchors;     // d loss / d anchor feature
  std::vector<std::vector<double>> candidates;  // d loss / d candidate feature
};

/// Analytic gradient of supcon_loss with respect to every raw feature
/// coordinate (no renormalization).
SupConGradient supcon_gradient(std::span<const ObjectFeature> anchors,
                               std::span<const ObjectFeature> candidates,
                               std::span<const double> weights,
                               const ContrastiveConfig& cfg = {});

struct FeatureBox {
  BBox box;
  ClassId class_id = 0;
  double confidence = 0.0;
};

struct FeatureExtraction {
  std::vector<ObjectFeature> features;
  std::size_t skipped_degenerate = 0;
};

/// ROIAlign each box, flatten and L2-normalize. Boxes that collapse after
/// clamping, or pool to an all-zero vector, are skipped and counted. Object
/// ids are the indices into `boxes`.
FeatureExtraction extract_object_features(const FeatureMap& map,
                                          std::span<const FeatureBox> boxes,
                                          const RoiAlignParams& pool = {},
                                          FeatureRole role = FeatureRole::kAnchor);

/// CSV rows: object_id,class_id,C,f0,f1,...
void write_feature_csv(std::ostream& out, std::span<const ObjectFeature> features);
std::vector<ObjectFeature> read_feature_csv(std::istream& in);

}  // namespace plr
