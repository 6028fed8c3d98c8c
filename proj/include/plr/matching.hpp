#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "plr/detection.hpp"

namespace plr {

/// Weights of the DETR-style matching cost.
struct CostWeights {
  double w_class = 2.0;
  double w_l1 = 5.0;
  double w_giou = 2.0;

  void validate() const;
};

/// Row-major n x m matrix of doubles.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// (prediction_index, gt_index) pairs sorted by prediction index.
struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  double total_cost(const CostMatrix& cost) const;
};

/// w_class * (1 - score of gt class) + w_l1 * L1(center-form boxes) +
/// w_giou * (1 - giou). Boxes are normalized by `image` before the L1 term.
/// Throws ValidationError when the prediction has no score for the gt class.
double match_cost(const Detection& pred, const GroundTruthObject& gt,
                  const CostWeights& weights = {}, ImageSize image = {});

CostMatrix cost_matrix(std::span<const Detection> preds,
                       std::span<const GroundTruthObject> gts,
                       const CostWeights& weights = {}, ImageSize image = {});

/// Minimum-cost one-to-one assignment of rows to columns; min(n, m) pairs.
/// Among optimal assignments the one whose per-row column sequence is
/// lexicographically smallest is returned. Throws ValidationError on
/// non-finite entries.
Assignment hungarian(const CostMatrix& cost);

/// Dense per-class IoU-branch targets: row i holds iou(pred_i, matched gt) at
/// pred_i's predicted class and zeros elsewhere; unmatched rows are all zero.
std::vector<std::vector<double>> iou_targets(
    std::span<const Detection> preds, std::span<const GroundTruthObject> gts,
    const Assignment& assignment, std::size_t num_classes);

}  // namespace plr
