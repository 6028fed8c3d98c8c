#include "plr/thresholds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "plr/error.hpp"
#include "plr/numeric.hpp"

namespace plr {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // ln(2*pi)

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

double log_sum_exp(std::span<const double> xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

void sort_components(GmmParams& p) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (p.means[a] != p.means[b]) return p.means[a] < p.means[b];
    return p.variances[a] < p.variances[b];
  });
  GmmParams out;
  for (std::size_t i : idx) {
    out.weights.push_back(p.weights[i]);
    out.means.push_back(p.means[i]);
    out.variances.push_back(p.variances[i]);
  }
  p = std::move(out);
}

double mean_of(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

double variance_of(std::span<const double> xs, double mean) {
  CompensatedSum s;
  for (double x : xs) s.add((x - mean) * (x - mean));
  return s.value() / static_cast<double>(xs.size());
}

// Equal-count contiguous chunks of the sorted samples; for K = 2 this is the
// median split.
GmmParams quantile_init(std::span<const double> sorted, std::size_t k,
                        double floor) {
  GmmParams p;
  const std::size_t n = sorted.size();
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t lo = j * n / k;
    const std::size_t hi = (j + 1) * n / k;
    const auto chunk = sorted.subspan(lo, hi - lo);
    const double m = mean_of(chunk);
    p.weights.push_back(1.0 / static_cast<double>(k));
    p.means.push_back(m);
    p.variances.push_back(std::max(variance_of(chunk, m), floor));
  }
  return p;
}

GmmParams random_init(std::span<const double> sorted, std::size_t k,
                      double floor, std::mt19937_64& rng) {
  std::vector<std::size_t> all(sorted.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> picks;
  std::sample(all.begin(), all.end(), std::back_inserter(picks), k, rng);
  const double var = std::max(variance_of(sorted, mean_of(sorted)), floor);
  GmmParams p;
  for (std::size_t i : picks) {
    p.weights.push_back(1.0 / static_cast<double>(k));
    p.means.push_back(sorted[i]);
    p.variances.push_back(var);
  }
  return p;
}

struct EmResult {
  GmmParams params;
  EmRun run;
};

EmResult run_em(std::span<const double> x, GmmParams p, const GmmConfig& cfg) {
  const std::size_t n = x.size();
  const std::size_t k = p.size();
  std::vector<double> resp(n * k);
  std::vector<double> logp(k);
  EmResult out;
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    // E-step
    CompensatedSum ll;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        logp[j] = p.weights[j] > 0.0
                      ? std::log(p.weights[j]) + log_normal(x[i], p.means[j], p.variances[j])
                      : -std::numeric_limits<double>::infinity();
      }
      const double lse = log_sum_exp(logp);
      ll.add(lse);
      for (std::size_t j = 0; j < k; ++j) resp[i * k + j] = std::exp(logp[j] - lse);
    }
    const double cur = ll.value();
    out.run.log_likelihoods.push_back(cur);
    if (it > 0 && cur - prev < cfg.tol) {
      out.run.converged = true;
      break;
    }
    prev = cur;

    // M-step
    for (std::size_t j = 0; j < k; ++j) {
      CompensatedSum nk, sx;
      for (std::size_t i = 0; i < n; ++i) {
        nk.add(resp[i * k + j]);
        sx.add(resp[i * k + j] * x[i]);
      }
      const double total = nk.value();
      if (total <= 0.0) {
        p.weights[j] = 0.0;
        continue;
      }
      const double mu = sx.value() / total;
      CompensatedSum sv;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - mu;
        sv.add(resp[i * k + j] * d * d);
      }
      p.weights[j] = total / static_cast<double>(n);
      p.means[j] = mu;
      p.variances[j] = std::max(sv.value() / total, cfg.variance_floor);
    }
  }
  out.params = std::move(p);
  return out;
}

}  // namespace

double GmmParams::log_density(double x) const {
  std::vector<double> logp(size());
  for (std::size_t j = 0; j < size(); ++j) {
    logp[j] = weights[j] > 0.0
                  ? std::log(weights[j]) + log_normal(x, means[j], variances[j])
                  : -std::numeric_limits<double>::infinity();
  }
  return log_sum_exp(logp);
}

std::vector<double> GmmParams::responsibilities(double x) const {
  std::vector<double> logp(size());
  for (std::size_t j = 0; j < size(); ++j) {
    logp[j] = weights[j] > 0.0
                  ? std::log(weights[j]) + log_normal(x, means[j], variances[j])
                  : -std::numeric_limits<double>::infinity();
  }
  const double lse = log_sum_exp(logp);
  for (double& v : logp) v = std::exp(v - lse);
  return logp;
}

double GmmParams::log_likelihood(std::span<const double> samples) const {
  CompensatedSum s;
  for (double x : samples) s.add(log_density(x));
  return s.value();
}

void GmmConfig::validate() const {
  if (num_components < 1) throw ValidationError("gmm needs >= 1 component");
  if (!(tol > 0.0)) throw ValidationError("gmm tol must be > 0");
  if (max_iter < 1) throw ValidationError("gmm max_iter must be >= 1");
  if (min_samples < num_components) {
    throw ValidationError("gmm min_samples must be >= num_components");
  }
  if (!(variance_floor > 0.0)) throw ValidationError("variance floor must be > 0");
  if (!(spread_floor >= 0.0)) throw ValidationError("spread floor must be >= 0");
}

GmmFit fit_gmm_1d(std::span<const double> samples, const GmmConfig& cfg) {
  cfg.validate();
  if (samples.size() < cfg.min_samples) {
    throw FallbackNeeded("too few samples (" + std::to_string(samples.size()) +
                         " < " + std::to_string(cfg.min_samples) + ")");
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  for (double x : sorted) {
    if (!std::isfinite(x)) throw ValidationError("gmm samples must be finite");
  }
  std::sort(sorted.begin(), sorted.end());
  if (sorted.back() - sorted.front() < cfg.spread_floor) {
    throw FallbackNeeded("degenerate spread");
  }

  GmmFit fit;
  fit.log_likelihood = -std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t r = 0; r <= cfg.restarts; ++r) {
    GmmParams init = r == 0 ? quantile_init(sorted, cfg.num_components, cfg.variance_floor)
                            : random_init(sorted, cfg.num_components, cfg.variance_floor, rng);
    EmResult res = run_em(sorted, std::move(init), cfg);
    const double ll = res.run.log_likelihoods.back();
    if (ll > fit.log_likelihood) {
      fit.log_likelihood = ll;
      fit.params = std::move(res.params);
      fit.best_run = r;
    }
    fit.runs.push_back(std::move(res.run));
  }
  sort_components(fit.params);
  return fit;
}

std::size_t positive_component(const GmmParams& params) {
  if (params.size() == 0) throw ValidationError("empty mixture");
  std::size_t best = 0;
  for (std::size_t j = 1; j < params.size(); ++j) {
    if (params.means[j] > params.means[best] ||
        (params.means[j] == params.means[best] &&
         params.variances[j] > params.variances[best])) {
      best = j;
    }
  }
  return best;
}

double class_threshold(std::span<const double> samples, const GmmParams& params,
                       const ThresholdOptions& options) {
  if (samples.empty()) throw FallbackNeeded("no samples");
  const std::size_t pos = positive_component(params);

  if (options.require_bimodal && params.size() > 1) {
    const double n = static_cast<double>(samples.size());
    const double m = mean_of(samples);
    double var = variance_of(samples, m);
    var = std::max(var, *std::min_element(params.variances.begin(), params.variances.end()));
    CompensatedSum ll1;
    for (double x : samples) ll1.add(log_normal(x, m, var));
    const double k = static_cast<double>(params.size());
    const double bic_single = -2.0 * ll1.value() + 2.0 * std::log(n);
    const double bic_mix = -2.0 * params.log_likelihood(samples) + (3.0 * k - 1.0) * std::log(n);
    if (!(bic_mix < bic_single)) throw FallbackNeeded("unimodal confidence distribution");
  }

  // Only samples at or above every other component's mean.
  double floor = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (j != pos) floor = std::max(floor, params.means[j]);
  }
  double best = std::numeric_limits<double>::infinity();
  for (double x : samples) {
    if (x < floor || x >= best) continue;
    if (params.responsibilities(x)[pos] > 0.5) best = x;
  }
  if (!std::isfinite(best)) throw FallbackNeeded("no sample in the positive segment");
  return best;
}

void ThresholdConfig::validate() const {
  gmm.validate();
  if (!(fallback >= 0.0 && fallback <= 1.0)) {
    throw ValidationError("fallback threshold must lie in [0, 1]");
  }
}

double ClassThresholds::threshold_for(ClassId cls) const {
  const auto it = entries_.find(cls);
  return it == entries_.end() ? fallback_ : it->second.threshold;
}

ClassThresholds fit_all_thresholds(
    const std::map<ClassId, std::vector<double>>& per_class_samples,
    const ThresholdConfig& cfg) {
  cfg.validate();
  ClassThresholds out(cfg.fallback);
  for (const auto& [cls, samples] : per_class_samples) {
    ClassThreshold entry;
    entry.sample_count = samples.size();
    try {
      GmmConfig gcfg = cfg.gmm;
      gcfg.seed = cfg.gmm.seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(cls) + 1));
      const GmmFit fit = fit_gmm_1d(samples, gcfg);
      entry.threshold = class_threshold(samples, fit.params, cfg.options);
      entry.source = ThresholdSource::kFitted;
      entry.gmm = fit.params;
    } catch (const FallbackNeeded& e) {
      entry.threshold = cfg.fallback;
      entry.source = ThresholdSource::kFallback;
      entry.gmm.reset();
      entry.fallback_reason = e.what();
    }
    out.set(cls, std::move(entry));
  }
  return out;
}

nlohmann::json thresholds_to_json(const ClassThresholds& t, const nlohmann::json& meta) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [cls, e] : t.entries()) {
    nlohmann::json j;
    j["threshold"] = e.threshold;
    j["source"] = e.source == ThresholdSource::kFitted ? "fitted" : "fallback";
    j["n"] = e.sample_count;
    if (e.gmm) {
      j["pi"] = e.gmm->weights;
      j["mu"] = e.gmm->means;
      j["sigma2"] = e.gmm->variances;
    } else {
      j["pi"] = nlohmann::json::array();
      j["mu"] = nlohmann::json::array();
      j["sigma2"] = nlohmann::json::array();
      j["reason"] = e.fallback_reason;
    }
    doc[std::to_string(cls)] = std::move(j);
  }
  nlohmann::json m = meta.is_object() ? meta : nlohmann::json::object();
  m["fallback"] = t.fallback();
  doc["meta"] = std::move(m);
  return doc;
}

ClassThresholds thresholds_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("thresholds document must be an object");
  double fallback = 0.5;
  if (doc.contains("meta") && doc["meta"].contains("fallback")) {
    fallback = doc["meta"]["fallback"].get<double>();
  }
  ClassThresholds out(fallback);
  for (const auto& [key, j] : doc.items()) {
    if (key == "meta") continue;
    ClassId cls = 0;
    try {
      std::size_t used = 0;
      cls = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ValidationError("thresholds: class key '" + key + "' is not an integer");
    }
    try {
      ClassThreshold e;
      e.threshold = j.at("threshold").get<double>();
      if (!(e.threshold >= 0.0 && e.threshold <= 1.0)) {
        throw ValidationError("thresholds: class " + key + " threshold outside [0, 1]");
      }
      const auto src = j.at("source").get<std::string>();
      if (src == "fitted") {
        e.source = ThresholdSource::kFitted;
      } else if (src == "fallback") {
        e.source = ThresholdSource::kFallback;
      } else {
        throw ValidationError("thresholds: unknown source '" + src + "'");
      }
      e.sample_count = j.value("n", std::size_t{0});
      e.fallback_reason = j.value("reason", std::string{});
      if (e.source == ThresholdSource::kFitted) {
        GmmParams p;
        p.weights = j.at("pi").get<std::vector<double>>();
        p.means = j.at("mu").get<std::vector<double>>();
        p.variances = j.at("sigma2").get<std::vector<double>>();
        if (p.weights.size() != p.means.size() || p.means.size() != p.variances.size()) {
          throw ValidationError("thresholds: class " + key + " has ragged mixture arrays");
        }
        e.gmm = std::move(p);
      }
      out.set(cls, std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError("thresholds: class " + key + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace plr
