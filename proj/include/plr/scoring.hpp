#pragma once

#include <span>

#include "plr/detection.hpp"

namespace plr {

/// Clamp applied to probabilities before taking logs.
inline constexpr double kLogEps = 1e-7;

struct VarifocalConfig {
  double alpha = 0.75;
  double gamma = 2.0;  // focusing exponent

  void validate() const;
};

/// Loss coefficients for the adversarial, unsupervised and contrastive terms.
struct HyperParams {
  double lambda_g = 1.0;
  double lambda_l = 1.0;
  double lambda_unsup = 1.0;
  double lambda_adv = 1.0;
  double lambda_contra = 0.05;

  void validate() const;
};

enum class Reduction { kSum, kMean };

/// IoU-aware classification loss for one element. q > 0 uses q as a soft
/// target weighted by q; q == 0 down-weights by alpha * p^gamma.
double varifocal_loss(double p, double q, const VarifocalConfig& cfg = {});

/// Reduced varifocal loss over paired predictions/targets. Mean of an empty
/// batch is 0.
double varifocal_loss(std::span<const double> p, std::span<const double> q,
                      const VarifocalConfig& cfg = {},
                      Reduction reduction = Reduction::kSum);

/// Geometric mean of classification confidence and localization certainty.
double combined_confidence(double c_class, double c_loc);

double combined_confidence(const Detection& det);

struct ReweightCoefficients {
  double cls_weight = 0.0;  // 1 + e^(C-1)
  double reg_weight = 0.0;  // e^(C-1)
};

ReweightCoefficients reweight_coefficients(double confidence);

struct BoxLossTerms {
  double l_cls = 0.0;
  double l_vfl = 0.0;
  double l_reg = 0.0;
  double confidence = 0.0;
};

/// Sum over boxes of cls_weight * (l_cls + l_vfl) + reg_weight * l_reg.
double weighted_unsup_loss(std::span<const BoxLossTerms> boxes);

/// Mean binary cross-entropy of discriminator outputs against domain label d
/// (1 source, 0 target). Throws ValidationError on empty input.
double discriminator_loss(int domain_label, std::span<const double> scores);

struct AdversarialTerms {
  double enc_global = 0.0;
  double dec_global = 0.0;
  double enc_local = 0.0;
  double dec_local = 0.0;
};

double adversarial_total(const AdversarialTerms& terms,
                         const HyperParams& hp = {});

struct StageInputs {
  double sup = 0.0;
  double unsup = 0.0;
  double contra = 0.0;
  double adv = 0.0;
};

struct StageLosses {
  double student = 0.0;  // sup + lambda_unsup * unsup
  double burn = 0.0;     // sup - lambda_adv * adv
  double mutual = 0.0;   // student + lambda_contra * contra - lambda_adv * adv
};

/// The adversarial term enters with a minus sign, mirroring the gradient
/// reversal layer in front of the discriminators.
StageLosses stage_losses(const StageInputs& in, const HyperParams& hp = {});

}  // namespace plr
