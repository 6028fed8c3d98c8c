#include "plr/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "plr/error.hpp"

namespace plr {

void CostWeights::validate() const {
  if (!(w_class >= 0.0) || !(w_l1 >= 0.0) || !(w_giou >= 0.0)) {
    throw ValidationError("cost weights must be nonnegative");
  }
  if (w_class + w_l1 + w_giou <= 0.0) {
    throw ValidationError("at least one cost weight must be positive");
  }
}

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ValidationError("cost matrix data size does not match shape");
  }
}

double Assignment::total_cost(const CostMatrix& cost) const {
  double total = 0.0;
  for (const auto& [r, c] : pairs) total += cost(r, c);
  return total;
}

double match_cost(const Detection& pred, const GroundTruthObject& gt,
                  const CostWeights& weights, ImageSize image) {
  if (gt.class_id < 0 ||
      static_cast<std::size_t>(gt.class_id) >= pred.class_scores.size()) {
    throw ValidationError("prediction carries no score for class " +
                          std::to_string(gt.class_id));
  }
  const BoxFormat center_norm{BoxLayout::kCenter, true};
  const auto p = from_bbox(pred.box, center_norm, image);
  const auto g = from_bbox(gt.box, center_norm, image);
  double l1 = 0.0;
  for (std::size_t k = 0; k < 4; ++k) l1 += std::abs(p[k] - g[k]);

  const double score =
      pred.class_scores[static_cast<std::size_t>(gt.class_id)];
  return weights.w_class * (1.0 - score) + weights.w_l1 * l1 +
         weights.w_giou * (1.0 - giou(pred.box, gt.box));
}

CostMatrix cost_matrix(std::span<const Detection> preds,
                       std::span<const GroundTruthObject> gts,
                       const CostWeights& weights, ImageSize image) {
  weights.validate();
  CostMatrix m(preds.size(), gts.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = 0; j < gts.size(); ++j) {
      m(i, j) = match_cost(preds[i], gts[j], weights, image);
    }
  }
  return m;
}

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

// Shortest augmenting path with row/column potentials on a square matrix.
// On return reduced costs a(i,j) - u[i] - v[j] are >= 0 (up to rounding) and
// zero on the matched edges.
struct SquareSolution {
  std::vector<std::size_t> col_of_row;
  std::vector<double> u;
  std::vector<double> v;
};

SquareSolution solve_square(const std::vector<double>& a, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based with a virtual column 0, as in the classic formulation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  SquareSolution sol;
  sol.col_of_row.assign(n, kNone);
  for (std::size_t j = 1; j <= n; ++j) sol.col_of_row[p[j] - 1] = j - 1;
  sol.u.assign(u.begin() + 1, u.end());
  sol.v.assign(v.begin() + 1, v.end());
  return sol;
}

// Walks the equality subgraph (tight edges) to turn any optimal perfect
// matching into the lexicographically smallest one. Every perfect matching
// of tight edges is optimal by complementary slackness.
void lexicographic_minimum(const std::vector<double>& a, std::size_t n,
                           SquareSolution& sol) {
  double max_abs = 0.0;
  for (double x : a) max_abs = std::max(max_abs, std::abs(x));
  auto reduced = [&](std::size_t i, std::size_t j) {
    return a[i * n + j] - sol.u[i] - sol.v[j];
  };
  double eps = 1e-10 * (1.0 + max_abs);
  for (std::size_t i = 0; i < n; ++i) {
    eps = std::max(eps, std::abs(reduced(i, sol.col_of_row[i])));
  }
  auto tight = [&](std::size_t i, std::size_t j) { return reduced(i, j) <= eps; };

  auto& col_of_row = sol.col_of_row;
  std::vector<std::size_t> row_of_col(n);
  for (std::size_t i = 0; i < n; ++i) row_of_col[col_of_row[i]] = i;

  std::vector<char> col_fixed(n, 0);
  std::vector<char> seen(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == col_of_row[i]) break;
      if (col_fixed[j] || !tight(i, j)) continue;
      // Reassign i -> j; the row r holding j must reach i's old column
      // through an alternating path over unfixed rows other than i.
      const std::size_t target = col_of_row[i];
      const std::size_t start = row_of_col[j];
      std::fill(seen.begin(), seen.end(), 0);
      std::queue<std::size_t> frontier;  // rows
      frontier.push(start);
      std::size_t found = kNone;
      // reached_from[c] = column held by the row that reached c.
      std::vector<std::size_t> reached_from(n, kNone);
      seen[j] = 1;
      while (!frontier.empty() && found == kNone) {
        const std::size_t r = frontier.front();
        frontier.pop();
        for (std::size_t c = 0; c < n; ++c) {
          if (seen[c] || col_fixed[c] || !tight(r, c)) continue;
          seen[c] = 1;
          reached_from[c] = (r == start) ? j : col_of_row[r];
          if (c == target) {
            found = c;
            break;
          }
          const std::size_t next = row_of_col[c];
          if (next != i) frontier.push(next);
        }
      }
      if (found == kNone) continue;
      // Shift along the path: each row on it takes the column it reached.
      std::size_t c = found;
      while (true) {
        const std::size_t from = reached_from[c];
        const std::size_t r = row_of_col[from];
        col_of_row[r] = c;
        row_of_col[c] = r;
        if (from == j) break;
        c = from;
      }
      col_of_row[i] = j;
      row_of_col[j] = i;
      break;
    }
    col_fixed[col_of_row[i]] = 1;
  }
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
  Assignment out;
  if (cost.empty()) return out;
  const std::size_t rows = cost.rows();
  const std::size_t cols = cost.cols();
  double max_abs = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = cost(r, c);
      if (!std::isfinite(x)) {
        throw ValidationError("cost matrix contains a non-finite entry");
      }
      max_abs = std::max(max_abs, std::abs(x));
    }
  }
  // Pad to square with a constant sentinel.
  const std::size_t n = std::max(rows, cols);
  const double sentinel = max_abs + 1.0;
  std::vector<double> a(n * n, sentinel);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) a[r * n + c] = cost(r, c);
  }

  SquareSolution sol = solve_square(a, n);
  lexicographic_minimum(a, n, sol);

  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t c = sol.col_of_row[r];
    if (c < cols) out.pairs.emplace_back(r, c);
  }
  return out;
}

std::vector<std::vector<double>> iou_targets(
    std::span<const Detection> preds, std::span<const GroundTruthObject> gts,
    const Assignment& assignment, std::size_t num_classes) {
  std::vector<std::vector<double>> targets(
      preds.size(), std::vector<double>(num_classes, 0.0));
  for (const auto& [p, g] : assignment.pairs) {
    if (p >= preds.size() || g >= gts.size()) {
      throw ValidationError("assignment index out of range");
    }
    const auto cls = static_cast<std::size_t>(preds[p].predicted_class);
    if (cls >= num_classes) {
      throw ValidationError("predicted class outside target width");
    }
    targets[p][cls] = iou(preds[p].box, gts[g].box);
  }
  return targets;
}

}  // namespace plr
