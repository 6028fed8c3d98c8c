#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "plr/error.hpp"
#include "plr/matching.hpp"

using plr::Assignment;
using plr::CostMatrix;

namespace {

CostMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  CostMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

plr::Detection det(plr::BBox box, std::vector<double> scores, double iou_score = 0.5) {
  return plr::Detection::make(box, std::move(scores), iou_score);
}

}  // namespace

TEST_CASE("hungarian examples") {
  using P = std::pair<std::size_t, std::size_t>;
  CHECK(plr::hungarian(from_rows({{1}})).pairs == std::vector<P>{{0, 0}});
  const auto a = plr::hungarian(from_rows({{1, 2}, {2, 1}}));
  CHECK(a.pairs == std::vector<P>{{0, 0}, {1, 1}});
  CHECK(a.total_cost(from_rows({{1, 2}, {2, 1}})) == 2.0);
  const auto b = plr::hungarian(from_rows({{4, 1}, {1, 4}}));
  CHECK(b.pairs == std::vector<P>{{0, 1}, {1, 0}});
  CHECK(plr::hungarian(CostMatrix()).pairs.empty());
  CHECK(plr::hungarian(CostMatrix(0, 3)).pairs.empty());
}

TEST_CASE("hungarian rejects non-finite costs") {
  CostMatrix m(2, 2, 1.0);
  m(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(plr::hungarian(m), plr::ValidationError);
}

TEST_CASE("hungarian handles rectangular matrices") {
  const auto wide = from_rows({{5, 1, 9}, {2, 8, 0}});
  const auto a = plr::hungarian(wide);
  REQUIRE(a.pairs.size() == 2);
  CHECK(a.total_cost(wide) == 1.0);
  const auto tall = from_rows({{5, 1}, {2, 8}, {0, 3}});
  const auto b = plr::hungarian(tall);
  REQUIRE(b.pairs.size() == 2);
  CHECK(b.total_cost(tall) == 1.0);
}

TEST_CASE("hungarian matches brute force, including lexicographic ties") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_int_distribution<int> small(0, 3);  // many ties
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = dim(rng), m = dim(rng);
    std::vector<std::vector<double>> rows(n, std::vector<double>(m));
    for (auto& r : rows) {
      for (auto& x : r) x = small(rng);
    }
    const auto brute = oracle::brute_force_assignment(rows);
    const auto got = plr::hungarian(from_rows(rows));
    CHECK(got.pairs.size() == std::min(n, m));
    double total = 0.0;
    for (const auto& [r, c] : got.pairs) total += rows[r][c];
    CHECK(total == brute.cost);
    // every real row maps to the same column as the lexicographically first optimum
    for (const auto& [r, c] : got.pairs) CHECK(brute.col_of_row[r] == c);
    for (std::size_t r = 0; r < n; ++r) {
      const bool matched = std::any_of(got.pairs.begin(), got.pairs.end(),
                                       [&](const auto& p) { return p.first == r; });
      CHECK(matched == (brute.col_of_row[r] < m));
    }
  }
}

TEST_CASE("hungarian is label-invariant under row permutation") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 6, m = 5;
    std::vector<std::vector<double>> rows(n, std::vector<double>(m));
    for (auto& r : rows) {
      for (auto& x : r) x = u(rng);
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<double>> shuffled(n);
    for (std::size_t i = 0; i < n; ++i) shuffled[i] = rows[perm[i]];
    const auto a = plr::hungarian(from_rows(rows));
    const auto b = plr::hungarian(from_rows(shuffled));
    std::vector<std::pair<std::size_t, std::size_t>> mapped;
    for (const auto& [r, c] : b.pairs) mapped.emplace_back(perm[r], c);
    std::sort(mapped.begin(), mapped.end());
    CHECK(mapped == a.pairs);
  }
}

TEST_CASE("match_cost") {
  const plr::BBox box{10, 10, 50, 60};
  const plr::GroundTruthObject gt{box, 1};
  const plr::CostWeights w;  // 2, 5, 2
  CHECK(plr::match_cost(det(box, {0.0, 1.0}), gt, w) == doctest::Approx(0.0));
  CHECK(plr::match_cost(det(box, {0.0, 0.5}), gt, w) == doctest::Approx(w.w_class * 0.5));
  // disjoint box: giou < 0 so the giou term exceeds w_giou
  const plr::BBox far{200, 200, 240, 250};
  const plr::CostWeights giou_only{0.0, 0.0, 2.0};
  const double c = plr::match_cost(det(far, {0.0, 1.0}), gt, giou_only);
  CHECK(c > giou_only.w_giou);
  CHECK(plr::match_cost(det(far, {0.0, 1.0}), gt, w) > plr::match_cost(det(box, {0.0, 1.0}), gt, w));
  // missing class score
  const plr::GroundTruthObject gt3{box, 3};
  CHECK_THROWS_AS(plr::match_cost(det(box, {0.2, 0.8}), gt3, w), plr::ValidationError);
}

TEST_CASE("cost weights validation") {
  CHECK_THROWS_AS(plr::CostWeights({0, 0, 0}).validate(), plr::ValidationError);
  CHECK_THROWS_AS(plr::CostWeights({-1, 1, 1}).validate(), plr::ValidationError);
  CHECK_NOTHROW(plr::CostWeights({0, 0, 1}).validate());
}

TEST_CASE("iou_targets") {
  const std::vector<plr::Detection> preds = {
      det({0, 0, 2, 2}, {0.1, 0.9}), det({0, 0, 2, 2}, {0.8, 0.2}), det({5, 5, 6, 6}, {0.6, 0.4})};
  const std::vector<plr::GroundTruthObject> gts = {{{0, 0, 2, 2}, 1}, {{1, 1, 3, 3}, 0}};
  Assignment a;
  a.pairs = {{0, 0}, {1, 1}};
  const auto q = plr::iou_targets(preds, gts, a, 2);
  REQUIRE(q.size() == 3);
  CHECK(q[0] == std::vector<double>{0.0, 1.0});
  CHECK(q[1][0] == doctest::Approx(1.0 / 7.0));
  CHECK(q[1][1] == 0.0);
  CHECK(q[2] == std::vector<double>{0.0, 0.0});
  for (const auto& row : q) {
    for (double x : row) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
}

TEST_CASE("iou_targets from a full matching round") {
  const std::vector<plr::Detection> preds = {det({100, 100, 150, 150}, {0.9, 0.1}),
                                             det({0, 0, 40, 40}, {0.2, 0.7}),
                                             det({300, 300, 310, 310}, {0.5, 0.4})};
  const std::vector<plr::GroundTruthObject> gts = {{{2, 2, 40, 42}, 1}, {{100, 100, 148, 152}, 0}};
  const auto a = plr::hungarian(plr::cost_matrix(preds, gts, {}, {512, 512}));
  const auto q = plr::iou_targets(preds, gts, a, 2);
  CHECK(q[0][0] == doctest::Approx(plr::iou(preds[0].box, gts[1].box)));
  CHECK(q[1][1] == doctest::Approx(plr::iou(preds[1].box, gts[0].box)));
  CHECK(q[2] == std::vector<double>{0.0, 0.0});
}
