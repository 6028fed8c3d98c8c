#include "plr/config.hpp"

#include <cstdio>
#include <set>

#include "plr/error.hpp"

namespace plr {

namespace {

using nlohmann::json;

// Reads known keys out of one object and rejects whatever is left over.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ValidationError(where() + " must be an object");
  }

  void number(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw ValidationError(where(key) + " must be a number");
      out = v->get<double>();
    }
  }

  template <typename T>
  void integer(const char* key, T& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                      v->get<long long>() < 0)) {
        throw ValidationError(where(key) + " must be a nonnegative integer");
      }
      out = v->get<T>();
    }
  }

  void boolean(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw ValidationError(where(key) + " must be true or false");
      out = v->get<bool>();
    }
  }

  void numbers(const char* key, std::vector<double>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) throw ValidationError(where(key) + " must be an array");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number()) throw ValidationError(where(key) + " entries must be numbers");
        out.push_back(x.get<double>());
      }
    }
  }

  void string(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw ValidationError(where(key) + " must be a string");
      out = v->get<std::string>();
    }
  }

  const json* sub(const char* key) { return take(key); }

  std::string child(const char* key) const { return where(key); }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (seen_.count(key) == 0) throw ValidationError("unknown config key " + where(key.c_str()));
    }
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }
  std::string where() const { return path_.empty() ? "config" : path_; }
  std::string where(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void with_section(Section& parent, const char* key, Fn&& fn) {
  if (const json* v = parent.sub(key)) {
    Section s(*v, parent.child(key));
    fn(s);
    s.finish();
  }
}

const char* denominator_name(DenominatorMode m) {
  return m == DenominatorMode::kStandard ? "standard" : "as_written";
}

}  // namespace

void RunConfig::validate() const {
  varifocal.validate();
  losses.validate();
  contrastive.validate();
  matching.validate();
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) {
    throw ValidationError("ema.momentum must lie in [0, 1]");
  }
  pipeline.validate();
  simulation.validate();
  if (!(static_threshold >= 0.0 && static_threshold <= 1.0)) {
    throw ValidationError("simulation.static_threshold must lie in [0, 1]");
  }
}

RunConfig config_from_json(const json& doc) {
  RunConfig cfg;
  Section root(doc, "");
  root.integer("seed", cfg.seed);
  with_section(root, "varifocal", [&](Section& s) {
    s.number("alpha", cfg.varifocal.alpha);
    s.number("gamma", cfg.varifocal.gamma);
  });
  with_section(root, "losses", [&](Section& s) {
    s.number("lambda_g", cfg.losses.lambda_g);
    s.number("lambda_l", cfg.losses.lambda_l);
    s.number("lambda_unsup", cfg.losses.lambda_unsup);
    s.number("lambda_adv", cfg.losses.lambda_adv);
    s.number("lambda_contra", cfg.losses.lambda_contra);
  });
  with_section(root, "contrastive", [&](Section& s) {
    s.number("temperature", cfg.contrastive.temperature);
    s.number("threshold_exponent", cfg.contrastive.threshold_exponent);
    std::string mode = denominator_name(cfg.contrastive.denominator);
    s.string("denominator", mode);
    if (mode == "as_written") {
      cfg.contrastive.denominator = DenominatorMode::kAsWritten;
    } else if (mode == "standard") {
      cfg.contrastive.denominator = DenominatorMode::kStandard;
    } else {
      throw ValidationError("contrastive.denominator must be 'as_written' or 'standard'");
    }
  });
  with_section(root, "matching", [&](Section& s) {
    s.number("w_class", cfg.matching.w_class);
    s.number("w_l1", cfg.matching.w_l1);
    s.number("w_giou", cfg.matching.w_giou);
  });
  with_section(root, "ema", [&](Section& s) { s.number("momentum", cfg.ema_momentum); });
  auto& gmm = cfg.pipeline.thresholds.gmm;
  with_section(root, "gmm", [&](Section& s) {
    s.integer("num_components", gmm.num_components);
    s.number("tol", gmm.tol);
    s.integer("max_iter", gmm.max_iter);
    s.integer("min_samples", gmm.min_samples);
    s.integer("restarts", gmm.restarts);
    s.number("variance_floor", gmm.variance_floor);
    s.number("spread_floor", gmm.spread_floor);
    s.boolean("require_bimodal", cfg.pipeline.thresholds.options.require_bimodal);
  });
  with_section(root, "thresholds", [&](Section& s) {
    s.number("fallback", cfg.pipeline.thresholds.fallback);
    s.integer("window_size", cfg.pipeline.window_size);
    s.number("score_floor", cfg.pipeline.score_floor);
  });
  auto& sim = cfg.simulation;
  with_section(root, "simulation", [&](Section& s) {
    s.integer("num_classes", sim.num_classes);
    s.number("frequency_ratio", sim.frequency_ratio);
    s.numbers("class_frequencies", sim.class_frequencies);
    s.integer("min_objects", sim.min_objects);
    s.integer("max_objects", sim.max_objects);
    s.number("image_width", sim.image.width);
    s.number("image_height", sim.image.height);
    s.number("min_box", sim.min_box);
    s.number("max_box", sim.max_box);
    s.number("box_noise", sim.box_noise);
    s.number("max_class_bias", sim.max_class_bias);
    s.numbers("class_bias", sim.class_bias);
    s.number("score_noise", sim.score_noise);
    s.number("iou_noise", sim.iou_noise);
    s.number("fp_rate", sim.fp_rate);
    s.number("fp_apparent_lo", sim.fp_apparent_lo);
    s.number("fp_apparent_hi", sim.fp_apparent_hi);
    s.integer("scenes", sim.scenes);
    s.number("static_threshold", cfg.static_threshold);
  });
  root.finish();
  gmm.seed = cfg.seed;
  sim.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  const auto& gmm = cfg.pipeline.thresholds.gmm;
  const auto& sim = cfg.simulation;
  return {
      {"seed", cfg.seed},
      {"varifocal", {{"alpha", cfg.varifocal.alpha}, {"gamma", cfg.varifocal.gamma}}},
      {"losses",
       {{"lambda_g", cfg.losses.lambda_g},
        {"lambda_l", cfg.losses.lambda_l},
        {"lambda_unsup", cfg.losses.lambda_unsup},
        {"lambda_adv", cfg.losses.lambda_adv},
        {"lambda_contra", cfg.losses.lambda_contra}}},
      {"contrastive",
       {{"temperature", cfg.contrastive.temperature},
        {"threshold_exponent", cfg.contrastive.threshold_exponent},
        {"denominator", denominator_name(cfg.contrastive.denominator)}}},
      {"matching",
       {{"w_class", cfg.matching.w_class},
        {"w_l1", cfg.matching.w_l1},
        {"w_giou", cfg.matching.w_giou}}},
      {"ema", {{"momentum", cfg.ema_momentum}}},
      {"gmm",
       {{"num_components", gmm.num_components},
        {"tol", gmm.tol},
        {"max_iter", gmm.max_iter},
        {"min_samples", gmm.min_samples},
        {"restarts", gmm.restarts},
        {"variance_floor", gmm.variance_floor},
        {"spread_floor", gmm.spread_floor},
        {"require_bimodal", cfg.pipeline.thresholds.options.require_bimodal}}},
      {"thresholds",
       {{"fallback", cfg.pipeline.thresholds.fallback},
        {"window_size", cfg.pipeline.window_size},
        {"score_floor", cfg.pipeline.score_floor}}},
      {"simulation",
       {{"num_classes", sim.num_classes},
        {"frequency_ratio", sim.frequency_ratio},
        {"class_frequencies", sim.class_frequencies},
        {"min_objects", sim.min_objects},
        {"max_objects", sim.max_objects},
        {"image_width", sim.image.width},
        {"image_height", sim.image.height},
        {"min_box", sim.min_box},
        {"max_box", sim.max_box},
        {"box_noise", sim.box_noise},
        {"max_class_bias", sim.max_class_bias},
        {"class_bias", sim.class_bias},
        {"score_noise", sim.score_noise},
        {"iou_noise", sim.iou_noise},
        {"fp_rate", sim.fp_rate},
        {"fp_apparent_lo", sim.fp_apparent_lo},
        {"fp_apparent_hi", sim.fp_apparent_hi},
        {"scenes", sim.scenes},
        {"static_threshold", cfg.static_threshold}}},
  };
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace plr
