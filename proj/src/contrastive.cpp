#include "plr/contrastive.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "plr/error.hpp"
#include "plr/numeric.hpp"
#include "plr/text.hpp"

namespace plr {

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ValidationError("contrastive temperature must be > 0");
  }
  if (!(threshold_exponent > 0.0 && threshold_exponent <= 1.0)) {
    throw ValidationError("threshold exponent must lie in (0, 1]");
  }
}

std::vector<double> contrastive_weights(std::span<const WeightInput> objects,
                                        double threshold_exponent) {
  if (objects.empty()) throw ValidationError("contrastive weights need objects");
  if (!(threshold_exponent > 0.0 && threshold_exponent <= 1.0)) {
    throw ValidationError("threshold exponent must lie in (0, 1]");
  }
  std::vector<double> w;
  w.reserve(objects.size());
  CompensatedSum total;
  for (const auto& o : objects) {
    if (!(o.confidence >= 0.0 && o.confidence <= 1.0)) {
      throw ValidationError("object confidence outside [0, 1]");
    }
    if (!(o.class_threshold >= 0.0 && o.class_threshold <= 1.0)) {
      throw ValidationError("class threshold outside [0, 1]");
    }
    const double raw = (1.0 + std::exp(o.confidence - 1.0)) *
                       (1.0 - std::pow(o.class_threshold, threshold_exponent));
    w.push_back(raw);
    total.add(raw);
  }
  const double z = total.value();
  if (!(z > 0.0)) throw ValidationError("all contrastive weights are zero");
  for (double& x : w) x /= z;
  return w;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  CompensatedSum s;
  for (std::size_t k = 0; k < a.size(); ++k) s.add(a[k] * b[k]);
  return s.value();
}

double log_sum_exp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  CompensatedSum s;
  for (double x : xs) s.add(std::exp(x - m));
  return m + std::log(s.value());
}

void softmax_inplace(std::vector<double>& xs) {
  const double lse = log_sum_exp(xs);
  for (double& x : xs) x = std::exp(x - lse);
}

void check_inputs(std::span<const ObjectFeature> anchors,
                  std::span<const ObjectFeature> candidates,
                  std::span<const double> weights, const ContrastiveConfig& cfg) {
  cfg.validate();
  if (weights.size() != anchors.size()) {
    throw ValidationError("supcon: one weight per anchor required");
  }
  std::size_t dim = 0;
  bool have_dim = false;
  auto check_dim = [&](const ObjectFeature& f) {
    if (!have_dim) {
      dim = f.feature.size();
      have_dim = true;
    } else if (f.feature.size() != dim) {
      throw ValidationError("supcon: feature dimensions differ");
    }
  };
  for (const auto& a : anchors) check_dim(a);
  for (const auto& c : candidates) check_dim(c);
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw ValidationError("supcon: anchor weights must be positive");
    }
  }
}

// Shared evaluation; fills gradients when `grad` is non-null.
SupConResult evaluate(std::span<const ObjectFeature> anchors,
                      std::span<const ObjectFeature> candidates,
                      std::span<const double> weights, const ContrastiveConfig& cfg,
                      SupConGradient* grad) {
  check_inputs(anchors, candidates, weights, cfg);
  const double inv_t = 1.0 / cfg.temperature;
  SupConResult res;
  CompensatedSum total;
  std::vector<std::size_t> pos, neg;
  std::vector<double> sp, sn;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& a = anchors[i];
    pos.clear();
    neg.clear();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const bool same = candidates[c].class_id == a.class_id;
      if (same) pos.push_back(c);
      if (!same || cfg.denominator == DenominatorMode::kStandard) neg.push_back(c);
    }
    if (pos.empty()) {
      ++res.skipped_no_positive;
      continue;
    }
    if (neg.empty()) {
      ++res.skipped_no_negative;
      continue;
    }
    sp.clear();
    sn.clear();
    for (std::size_t c : pos) sp.push_back(dot(a.feature, candidates[c].feature) * inv_t);
    for (std::size_t c : neg) sn.push_back(dot(a.feature, candidates[c].feature) * inv_t);
    const double term = -(std::log(weights[i]) - std::log(static_cast<double>(pos.size())) +
                          log_sum_exp(sp) - log_sum_exp(sn));
    total.add(term);
    ++res.anchors_used;

    if (grad != nullptr) {
      softmax_inplace(sp);
      softmax_inplace(sn);
      auto& ga = grad->anchors[i];
      for (std::size_t k = 0; k < pos.size(); ++k) {
        const auto& zp = candidates[pos[k]].feature;
        auto& gp = grad->candidates[pos[k]];
        for (std::size_t d = 0; d < zp.size(); ++d) {
          ga[d] -= sp[k] * zp[d] * inv_t;
          gp[d] -= sp[k] * a.feature[d] * inv_t;
        }
      }
      for (std::size_t k = 0; k < neg.size(); ++k) {
        const auto& zn = candidates[neg[k]].feature;
        auto& gn = grad->candidates[neg[k]];
        for (std::size_t d = 0; d < zn.size(); ++d) {
          ga[d] += sn[k] * zn[d] * inv_t;
          gn[d] += sn[k] * a.feature[d] * inv_t;
        }
      }
    }
  }
  if (res.anchors_used == 0) {
    throw ValidationError("supcon: no anchor has both positive and negative candidates");
  }
  res.loss = total.value();
  return res;
}

}  // namespace

SupConResult supcon_loss(std::span<const ObjectFeature> anchors,
                         std::span<const ObjectFeature> candidates,
                         std::span<const double> weights, const ContrastiveConfig& cfg) {
  return evaluate(anchors, candidates, weights, cfg, nullptr);
}

SupConGradient supcon_gradient(std::span<const ObjectFeature> anchors,
                               std::span<const ObjectFeature> candidates,
                               std::span<const double> weights,
                               const ContrastiveConfig& cfg) {
  SupConGradient g;
  for (const auto& a : anchors) g.anchors.emplace_back(a.feature.size(), 0.0);
  for (const auto& c : candidates) g.candidates.emplace_back(c.feature.size(), 0.0);
  g.value = evaluate(anchors, candidates, weights, cfg, &g);
  return g;
}

FeatureExtraction extract_object_features(const FeatureMap& map,
                                          std::span<const FeatureBox> boxes,
                                          const RoiAlignParams& pool, FeatureRole role) {
  FeatureExtraction out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    std::vector<double> v;
    try {
      v = roi_align(map, boxes[i].box, pool);
    } catch (const DegenerateRegion&) {
      ++out.skipped_degenerate;
      continue;
    }
    const double norm = std::sqrt(dot(v, v));
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      ++out.skipped_degenerate;
      continue;
    }
    for (double& x : v) x /= norm;
    out.features.push_back({i, boxes[i].class_id, boxes[i].confidence, role, std::move(v)});
  }
  return out;
}

void write_feature_csv(std::ostream& out, std::span<const ObjectFeature> features) {
  std::size_t dim = 0;
  for (const auto& f : features) dim = std::max(dim, f.feature.size());
  out << "object_id,class_id,C";
  for (std::size_t d = 0; d < dim; ++d) out << ",f" << d;
  out << '\n';
  for (const auto& f : features) {
    out << f.object_id << ',' << f.class_id << ',' << format_double(f.confidence);
    for (double x : f.feature) out << ',' << format_double(x);
    out << '\n';
  }
}

std::vector<ObjectFeature> read_feature_csv(std::istream& in) {
  std::vector<ObjectFeature> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  if (line.rfind("object_id,class_id,C", 0) != 0) {
    throw ValidationError("feature csv: unexpected header");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) {
      throw ValidationError("feature csv line " + std::to_string(lineno) + ": too few columns");
    }
    try {
      ObjectFeature f;
      f.object_id = std::stoull(cells[0]);
      f.class_id = std::stoi(cells[1]);
      f.confidence = parse_double(cells[2]);
      for (std::size_t k = 3; k < cells.size(); ++k) f.feature.push_back(parse_double(cells[k]));
      out.push_back(std::move(f));
    } catch (const std::exception& e) {
      throw ValidationError("feature csv line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace plr
