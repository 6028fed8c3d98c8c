#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "plr/geometry.hpp"

namespace plr {

using ClassId = int;
using ImageId = std::int64_t;

/// One teacher prediction. `iou_score` is the IoU-branch output used as
/// localization certainty.
struct Detection {
  BBox box;
  std::vector<double> class_scores;
  double iou_score = 0.0;
  ClassId predicted_class = 0;

  /// Builds a detection with predicted_class = argmax(class_scores), ties to
  /// the lowest index. Throws ValidationError on out-of-range scores.
  static Detection make(const BBox& box, std::vector<double> class_scores,
                        double iou_score);

  double class_score() const {
    return class_scores[static_cast<std::size_t>(predicted_class)];
  }

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruthObject {
  BBox box;
  ClassId class_id = 0;

  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

struct ImageDetections {
  ImageId image_id = 0;
  std::vector<Detection> detections;

  friend bool operator==(const ImageDetections&, const ImageDetections&) = default;
};

struct ImageGroundTruth {
  ImageId image_id = 0;
  std::vector<GroundTruthObject> objects;

  friend bool operator==(const ImageGroundTruth&, const ImageGroundTruth&) = default;
};

}  // namespace plr
