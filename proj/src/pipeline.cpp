#include "plr/pipeline.hpp"

#include <cmath>
#include <string>

#include "plr/error.hpp"
#include "plr/scoring.hpp"

namespace plr {

RefineResult refine(std::span<const ImageDetections> images,
                    const ClassThresholds& thresholds) {
  RefineResult out;
  auto& stats = out.stats;
  stats.images = images.size();
  for (const auto& [cls, entry] : thresholds.entries()) {
    auto& cs = stats.per_class[cls];
    cs.threshold = entry.threshold;
    cs.source = entry.source;
  }
  out.images.reserve(images.size());
  for (const auto& img : images) {
    ImageLabels labels{img.image_id, {}};
    for (const auto& det : img.detections) {
      const ClassId cls = det.predicted_class;
      auto [it, inserted] = stats.per_class.try_emplace(cls);
      auto& cs = it->second;
      if (inserted) {
        cs.threshold = thresholds.fallback();
        cs.source = ThresholdSource::kFallback;
        cs.missing_threshold = true;
      }
      ++cs.raw;
      ++stats.raw_detections;
      const double c = combined_confidence(det);
      if (c < cs.threshold) continue;
      const auto w = reweight_coefficients(c);
      labels.labels.push_back({det.box, cls, c, w.cls_weight, w.reg_weight, img.image_id});
      ++cs.accepted;
      ++stats.accepted;
    }
    out.images.push_back(std::move(labels));
  }
  return out;
}

EmaState::EmaState(std::vector<double> teacher, double momentum)
    : teacher_(std::move(teacher)), momentum_(momentum) {
  if (!(momentum_ >= 0.0 && momentum_ <= 1.0)) {
    throw ValidationError("EMA momentum must lie in [0, 1]");
  }
  for (double x : teacher_) {
    if (!std::isfinite(x)) throw ValidationError("teacher parameters must be finite");
  }
}

void EmaState::update(std::span<const double> student) {
  if (student.size() != teacher_.size()) {
    throw ValidationError("EMA: student has " + std::to_string(student.size()) +
                          " parameters, teacher has " + std::to_string(teacher_.size()));
  }
  for (double x : student) {
    if (!std::isfinite(x)) throw ValidationError("student parameters must be finite");
  }
  const double keep = momentum_;
  const double take = 1.0 - momentum_;
  for (std::size_t i = 0; i < teacher_.size(); ++i) {
    teacher_[i] = keep * teacher_[i] + take * student[i];
  }
  ++step_;
}

EmaState ema_update(EmaState state, std::span<const double> student) {
  state.update(student);
  return state;
}

ConfidenceWindow::ConfidenceWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ValidationError("confidence window capacity must be >= 1");
}

void ConfidenceWindow::push(double c) {
  if (values_.size() == capacity_) values_.pop_front();
  values_.push_back(c);
}

void PipelineConfig::validate() const {
  thresholds.validate();
  if (window_size == 0) throw ValidationError("window size must be >= 1");
  if (!(score_floor >= 0.0 && score_floor <= 1.0)) {
    throw ValidationError("score floor must lie in [0, 1]");
  }
}

PipelineState::PipelineState(PipelineConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

RoundOutput PipelineState::run_round(std::span<const ImageDetections> teacher_detections) {
  std::size_t below_floor = 0;
  for (const auto& img : teacher_detections) {
    for (const auto& det : img.detections) {
      const double c = combined_confidence(det);
      if (c < cfg_.score_floor) {
        ++below_floor;
        continue;
      }
      windows_.try_emplace(det.predicted_class, cfg_.window_size).first->second.push(c);
    }
  }

  std::map<ClassId, std::vector<double>> samples;
  for (const auto& [cls, window] : windows_) samples.emplace(cls, window.snapshot());
  ThresholdConfig tcfg = cfg_.thresholds;
  tcfg.gmm.seed = cfg_.thresholds.gmm.seed + rounds_;

  RoundOutput out;
  out.thresholds = fit_all_thresholds(samples, tcfg);
  RefineResult refined = refine(teacher_detections, out.thresholds);
  out.labels = std::move(refined.images);
  out.stats = std::move(refined.stats);
  out.stats.round = rounds_;
  out.stats.below_score_floor = below_floor;
  ++rounds_;
  return out;
}

namespace {

nlohmann::json bbox_json(const BBox& b) { return {b.x1, b.y1, b.x2, b.y2}; }

BBox bbox_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw ValidationError("bbox must have 4 numbers");
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw ValidationError("bbox is not a valid corner box");
  return b;
}

const char* source_name(ThresholdSource s) {
  return s == ThresholdSource::kFitted ? "fitted" : "fallback";
}

}  // namespace

nlohmann::json labels_to_json(std::span<const ImageLabels> images, const nlohmann::json& meta) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& img : images) {
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& l : img.labels) {
      labels.push_back({{"bbox", bbox_json(l.box)},
                        {"class_id", l.class_id},
                        {"C", l.confidence},
                        {"cls_weight", l.cls_weight},
                        {"reg_weight", l.reg_weight}});
    }
    arr.push_back({{"image_id", img.image_id}, {"labels", std::move(labels)}});
  }
  return {{"images", std::move(arr)}, {"meta", meta}};
}

std::vector<ImageLabels> labels_from_json(const nlohmann::json& doc) {
  const nlohmann::json* arr = &doc;
  if (doc.is_object()) {
    if (!doc.contains("images")) throw ValidationError("labels document lacks 'images'");
    arr = &doc["images"];
  }
  if (!arr->is_array()) throw ValidationError("labels must be an array of images");
  std::vector<ImageLabels> out;
  try {
    for (const auto& img : *arr) {
      ImageLabels il;
      il.image_id = img.at("image_id").get<ImageId>();
      for (const auto& l : img.at("labels")) {
        PseudoLabel p;
        p.box = bbox_from_json(l.at("bbox"));
        p.class_id = l.at("class_id").get<ClassId>();
        p.confidence = l.at("C").get<double>();
        p.cls_weight = l.at("cls_weight").get<double>();
        p.reg_weight = l.at("reg_weight").get<double>();
        p.source_image_id = il.image_id;
        il.labels.push_back(p);
      }
      out.push_back(std::move(il));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("labels: ") + e.what());
  }
  return out;
}

nlohmann::json stats_to_json(const RoundStats& s, const nlohmann::json& meta) {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [cls, c] : s.per_class) {
    classes[std::to_string(cls)] = {{"raw", c.raw},
                                    {"accepted", c.accepted},
                                    {"acceptance_rate", c.acceptance_rate()},
                                    {"threshold", c.threshold},
                                    {"source", source_name(c.source)},
                                    {"missing_threshold", c.missing_threshold}};
  }
  return {{"round", s.round},
          {"images", s.images},
          {"raw_detections", s.raw_detections},
          {"accepted", s.accepted},
          {"below_score_floor", s.below_score_floor},
          {"classes", std::move(classes)},
          {"meta", meta}};
}

RoundStats stats_from_json(const nlohmann::json& j) {
  RoundStats s;
  try {
    s.round = j.at("round").get<std::uint64_t>();
    s.images = j.at("images").get<std::size_t>();
    s.raw_detections = j.at("raw_detections").get<std::size_t>();
    s.accepted = j.at("accepted").get<std::size_t>();
    s.below_score_floor = j.at("below_score_floor").get<std::size_t>();
    for (const auto& [key, c] : j.at("classes").items()) {
      ClassRoundStats cs;
      cs.raw = c.at("raw").get<std::size_t>();
      cs.accepted = c.at("accepted").get<std::size_t>();
      cs.threshold = c.at("threshold").get<double>();
      cs.source = c.at("source").get<std::string>() == "fitted" ? ThresholdSource::kFitted
                                                              : ThresholdSource::kFallback;
      cs.missing_threshold = c.at("missing_threshold").get<bool>();
      s.per_class[std::stoi(key)] = cs;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("stats: ") + e.what());
  }
  return s;
}

}  // namespace plr
