#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "plr/error.hpp"
#include "plr/scoring.hpp"

TEST_CASE("varifocal examples") {
  const plr::VarifocalConfig cfg;  // alpha 0.75, gamma 2
  CHECK(plr::varifocal_loss(0.0, 0.0, cfg) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(plr::varifocal_loss(0.8, 0.8, cfg) == doctest::Approx(0.400322).epsilon(1e-6));
  CHECK(plr::varifocal_loss(0.5, 0.0, cfg) == doctest::Approx(0.75 * 0.25 * std::log(2.0)));
  CHECK(std::abs(plr::varifocal_loss(0.5, 0.0, cfg) - 0.1299651) < 1e-6);
  CHECK(std::isfinite(plr::varifocal_loss(1.0, 0.0, cfg)));
  CHECK(std::isfinite(plr::varifocal_loss(0.0, 1.0, cfg)));
  CHECK_THROWS_AS(plr::varifocal_loss(1.2, 0.0, cfg), plr::ValidationError);
}

TEST_CASE("varifocal is minimized at p = q for positive targets") {
  for (double q : {0.1, 0.33, 0.5, 0.77, 0.95}) {
    double best_p = -1.0, best = 1e300;
    for (int k = 0; k <= 10000; ++k) {
      const double p = k / 10000.0;
      const double v = plr::varifocal_loss(p, q);
      CHECK(v >= 0.0);
      if (v < best) {
        best = v;
        best_p = p;
      }
    }
    CHECK(std::abs(best_p - q) <= 1e-3);
  }
}

TEST_CASE("varifocal reductions") {
  const std::vector<double> p{0.2, 0.9, 0.4}, q{0.0, 0.8, 0.3};
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += plr::varifocal_loss(p[i], q[i]);
  CHECK(plr::varifocal_loss(p, q) == doctest::Approx(sum));
  CHECK(plr::varifocal_loss(p, q, {}, plr::Reduction::kMean) == doctest::Approx(sum / 3));
  CHECK(plr::varifocal_loss(std::vector<double>{}, std::vector<double>{}, {},
                            plr::Reduction::kMean) == 0.0);
  CHECK_THROWS_AS(plr::varifocal_loss(p, std::vector<double>{0.1}), plr::ValidationError);
}

TEST_CASE("combined confidence") {
  CHECK(plr::combined_confidence(1, 1) == 1.0);
  CHECK(plr::combined_confidence(0, 0.7) == 0.0);
  CHECK(plr::combined_confidence(0.81, 0.49) == doctest::Approx(0.63).epsilon(1e-12));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 500; ++t) {
    const double a = u(rng), b = u(rng);
    const double c = plr::combined_confidence(a, b);
    CHECK(c == plr::combined_confidence(b, a));
    CHECK(c >= std::min(a, b) - 1e-15);
    CHECK(c <= std::max(a, b) + 1e-15);
  }
}

TEST_CASE("reweight coefficients") {
  const auto one = plr::reweight_coefficients(1.0);
  CHECK(one.cls_weight == 2.0);
  CHECK(one.reg_weight == 1.0);
  const auto zero = plr::reweight_coefficients(0.0);
  CHECK(zero.cls_weight == doctest::Approx(1.367879).epsilon(1e-6));
  CHECK(zero.reg_weight == doctest::Approx(0.367879).epsilon(1e-6));
  const auto half = plr::reweight_coefficients(0.5);
  CHECK(half.cls_weight > zero.cls_weight);
  CHECK(half.cls_weight < one.cls_weight);
  CHECK(half.reg_weight > zero.reg_weight);
  CHECK(half.reg_weight < one.reg_weight);
  for (int k = 0; k <= 100; ++k) {
    const auto w = plr::reweight_coefficients(k / 100.0);
    CHECK(w.cls_weight - w.reg_weight == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("weighted unsupervised loss") {
  CHECK(plr::weighted_unsup_loss({}) == 0.0);
  const std::vector<plr::BoxLossTerms> one{{1.0, 0.0, 1.0, 1.0}};
  CHECK(plr::weighted_unsup_loss(one) == doctest::Approx(3.0));
  std::vector<plr::BoxLossTerms> boxes{{0.3, 0.1, 0.7, 0.2}, {1.1, 0.4, 0.05, 0.9}};
  const double base = plr::weighted_unsup_loss(boxes);
  for (auto& b : boxes) {
    b.l_cls *= 3.5;
    b.l_vfl *= 3.5;
    b.l_reg *= 3.5;
  }
  CHECK(plr::weighted_unsup_loss(boxes) == doctest::Approx(3.5 * base).epsilon(1e-12));
  const std::vector<plr::BoxLossTerms> bad{{-1.0, 0.0, 0.0, 0.5}};
  CHECK_THROWS_AS(plr::weighted_unsup_loss(bad), plr::ValidationError);
}

TEST_CASE("discriminator loss") {
  const std::vector<double> ones{1.0, 1.0};
  CHECK(plr::discriminator_loss(1, ones) == doctest::Approx(0.0).epsilon(1e-6));
  const std::vector<double> half{0.5};
  CHECK(plr::discriminator_loss(1, half) == doctest::Approx(std::log(2.0)));
  CHECK(plr::discriminator_loss(0, half) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK_THROWS_AS(plr::discriminator_loss(1, std::vector<double>{}), plr::ValidationError);
  CHECK_THROWS_AS(plr::discriminator_loss(2, half), plr::ValidationError);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s(5), flipped(5);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = u(rng);
      flipped[i] = 1.0 - s[i];
    }
    CHECK(plr::discriminator_loss(1, s) == doctest::Approx(plr::discriminator_loss(0, flipped)));
  }
}

TEST_CASE("adversarial total and stage losses") {
  plr::HyperParams hp;
  CHECK(plr::adversarial_total({}, hp) == 0.0);
  hp.lambda_g = hp.lambda_l = 1.0;
  CHECK(plr::adversarial_total({1, 1, 1, 1}, hp) == 4.0);
  hp.lambda_l = 0.0;
  CHECK(plr::adversarial_total({1, 1, 100, 100}, hp) == 2.0);

  plr::HyperParams s;
  s.lambda_unsup = 0.5;
  CHECK(plr::stage_losses({1.0, 2.0, 0.0, 0.0}, s).student == 2.0);
  const auto zero = plr::stage_losses({}, {});
  CHECK(zero.student == 0.0);
  CHECK(zero.burn == 0.0);
  CHECK(zero.mutual == 0.0);
  const plr::HyperParams defaults;
  CHECK(defaults.lambda_contra == 0.05);
  CHECK(plr::stage_losses({0, 0, 1, 0}, defaults).mutual == doctest::Approx(0.05));
  // adversarial term is subtracted
  const auto adv = plr::stage_losses({1.0, 0.0, 0.0, 2.0}, defaults);
  CHECK(adv.burn == -1.0);
  CHECK(adv.mutual == -1.0);
}

TEST_CASE("loss evaluators agree with direct formulas on random inputs") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, 1);
  plr::VarifocalConfig cfg{0.4, 1.5};
  for (int t = 0; t < 300; ++t) {
    const double p = u(rng);
    const double q = t % 3 == 0 ? 0.0 : u(rng);
    CHECK(std::abs(plr::varifocal_loss(p, q, cfg) - oracle::varifocal(p, q, 0.4, 1.5)) <= 1e-9);
    const double a = u(rng), b = u(rng);
    CHECK(std::abs(plr::combined_confidence(a, b) - oracle::combined(a, b)) <= 1e-9);
  }
}

TEST_CASE("detection argmax ties to the lowest index") {
  const auto d = plr::Detection::make({0, 0, 1, 1}, {0.3, 0.7, 0.7}, 0.5);
  CHECK(d.predicted_class == 1);
  CHECK(d.class_score() == 0.7);
  CHECK_THROWS_AS(plr::Detection::make({0, 0, 1, 1}, {1.3}, 0.5), plr::ValidationError);
  CHECK_THROWS_AS(plr::Detection::make({0, 0, 1, 1}, {0.3}, -0.1), plr::ValidationError);
  CHECK_THROWS_AS(plr::Detection::make({2, 0, 1, 1}, {0.3}, 0.1), plr::ValidationError);
}
