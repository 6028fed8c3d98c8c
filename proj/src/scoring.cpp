#include "plr/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plr/error.hpp"
#include "plr/numeric.hpp"

namespace plr {

namespace {

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

double clamp_prob(double p) { return std::clamp(p, kLogEps, 1.0 - kLogEps); }

}  // namespace

Detection Detection::make(const BBox& box, std::vector<double> class_scores,
                          double iou_score) {
  if (class_scores.empty()) {
    throw ValidationError("detection needs at least one class score");
  }
  for (double s : class_scores) {
    if (!in_unit(s)) throw ValidationError("class score outside [0, 1]");
  }
  if (!in_unit(iou_score)) throw ValidationError("iou_score outside [0, 1]");
  if (!box.valid()) throw ValidationError("detection box is invalid");
  Detection d;
  d.box = box;
  d.iou_score = iou_score;
  d.predicted_class = static_cast<ClassId>(
      std::max_element(class_scores.begin(), class_scores.end()) -
      class_scores.begin());
  d.class_scores = std::move(class_scores);
  return d;
}

void VarifocalConfig::validate() const {
  if (!(alpha >= 0.0) || !(gamma >= 0.0)) {
    throw ValidationError("varifocal alpha and gamma must be >= 0");
  }
}

void HyperParams::validate() const {
  for (double x : {lambda_g, lambda_l, lambda_unsup, lambda_adv, lambda_contra}) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw ValidationError("loss coefficients must be finite and >= 0");
    }
  }
}

double varifocal_loss(double p, double q, const VarifocalConfig& cfg) {
  if (!in_unit(p) || !in_unit(q)) {
    throw ValidationError("varifocal inputs must lie in [0, 1]");
  }
  const double pc = clamp_prob(p);
  if (q > 0.0) {
    return -q * (q * std::log(pc) + (1.0 - q) * std::log1p(-pc));
  }
  return -cfg.alpha * std::pow(pc, cfg.gamma) * std::log1p(-pc);
}

double varifocal_loss(std::span<const double> p, std::span<const double> q,
                      const VarifocalConfig& cfg, Reduction reduction) {
  if (p.size() != q.size()) {
    throw ValidationError("varifocal: prediction/target length mismatch");
  }
  CompensatedSum acc;
  for (std::size_t i = 0; i < p.size(); ++i) acc.add(varifocal_loss(p[i], q[i], cfg));
  if (reduction == Reduction::kMean) {
    return p.empty() ? 0.0 : acc.value() / static_cast<double>(p.size());
  }
  return acc.value();
}

double combined_confidence(double c_class, double c_loc) {
  if (!in_unit(c_class) || !in_unit(c_loc)) {
    throw ValidationError("confidences must lie in [0, 1]");
  }
  return std::sqrt(c_class * c_loc);
}

double combined_confidence(const Detection& det) {
  return combined_confidence(det.class_score(), det.iou_score);
}

ReweightCoefficients reweight_coefficients(double confidence) {
  if (!in_unit(confidence)) {
    throw ValidationError("confidence must lie in [0, 1]");
  }
  const double e = std::exp(confidence - 1.0);
  return {1.0 + e, e};
}

double weighted_unsup_loss(std::span<const BoxLossTerms> boxes) {
  CompensatedSum acc;
  for (const auto& b : boxes) {
    if (b.l_cls < 0.0 || b.l_vfl < 0.0 || b.l_reg < 0.0) {
      throw ValidationError("per-box loss terms must be >= 0");
    }
    const auto w = reweight_coefficients(b.confidence);
    acc.add(w.cls_weight * (b.l_cls + b.l_vfl) + w.reg_weight * b.l_reg);
  }
  return acc.value();
}

double discriminator_loss(int domain_label, std::span<const double> scores) {
  if (domain_label != 0 && domain_label != 1) {
    throw ValidationError("domain label must be 0 or 1");
  }
  if (scores.empty()) {
    throw ValidationError("discriminator loss needs at least one score");
  }
  const double d = domain_label;
  CompensatedSum acc;
  for (double s : scores) {
    if (!in_unit(s)) throw ValidationError("discriminator score outside [0, 1]");
    const double sc = clamp_prob(s);
    acc.add(d * std::log(sc) + (1.0 - d) * std::log1p(-sc));
  }
  return -acc.value() / static_cast<double>(scores.size());
}

double adversarial_total(const AdversarialTerms& t, const HyperParams& hp) {
  return hp.lambda_g * (t.enc_global + t.dec_global) +
         hp.lambda_l * (t.enc_local + t.dec_local);
}

StageLosses stage_losses(const StageInputs& in, const HyperParams& hp) {
  for (double x : {in.sup, in.unsup, in.contra, in.adv}) {
    if (!std::isfinite(x)) throw ValidationError("stage loss inputs must be finite");
  }
  StageLosses out;
  out.student = in.sup + hp.lambda_unsup * in.unsup;
  out.burn = in.sup - hp.lambda_adv * in.adv;
  out.mutual = out.student + hp.lambda_contra * in.contra - hp.lambda_adv * in.adv;
  return out;
}

}  // namespace plr
