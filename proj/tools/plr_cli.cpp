// plr: pseudo-label refinement command-line tool.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "plr/config.hpp"
#include "plr/contrastive.hpp"
#include "plr/error.hpp"
#include "plr/io.hpp"
#include "plr/pipeline.hpp"
#include "plr/scoring.hpp"
#include "plr/simulation.hpp"
#include "plr/thresholds.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

void report_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

plr::RunConfig load_config(const std::string& path) {
  if (path.empty()) return plr::config_from_json(json::object());
  return plr::config_from_json(plr::read_json_file(path));
}

json run_meta(const plr::RunConfig& cfg) {
  return {{"config_hash", plr::config_hash(cfg)}, {"seed", cfg.seed}};
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    plr::write_text_atomic(path, content);
  }
}

int cmd_fit_thresholds(const plr::RunConfig& cfg, const std::string& preds,
                       const std::string& out) {
  const auto images = plr::load_predictions(preds);
  std::map<plr::ClassId, plr::ConfidenceWindow> windows;
  std::size_t below_floor = 0;
  for (const auto& img : images) {
    for (const auto& det : img.detections) {
      const double c = plr::combined_confidence(det);
      if (c < cfg.pipeline.score_floor) {
        ++below_floor;
        continue;
      }
      windows.try_emplace(det.predicted_class, cfg.pipeline.window_size).first->second.push(c);
    }
  }
  std::map<plr::ClassId, std::vector<double>> samples;
  for (const auto& [cls, w] : windows) samples.emplace(cls, w.snapshot());
  const auto thresholds = plr::fit_all_thresholds(samples, cfg.pipeline.thresholds);
  json meta = run_meta(cfg);
  meta["gmm_input"] = {{"source", "combined confidence of every prediction in the file"},
                       {"score_floor", cfg.pipeline.score_floor},
                       {"window_size", cfg.pipeline.window_size},
                       {"below_score_floor", below_floor}};
  write_output(out, plr::dump_json(plr::thresholds_to_json(thresholds, meta)));
  return kExitOk;
}

int cmd_refine(const plr::RunConfig& cfg, const std::string& preds, const std::string& tpath,
               const std::string& out, const std::string& stats_path) {
  const auto images = plr::load_predictions(preds);
  const auto thresholds = plr::thresholds_from_json(plr::read_json_file(tpath));
  const auto result = plr::refine(images, thresholds);
  const json meta = run_meta(cfg);
  write_output(out, plr::dump_json(plr::labels_to_json(result.images, meta)));
  if (!stats_path.empty()) {
    plr::write_text_atomic(stats_path, plr::stats_to_json(result.stats, meta).dump() + "\n");
  }
  return kExitOk;
}

int cmd_simulate(const plr::RunConfig& cfg, std::size_t rounds, const std::string& out,
                 const std::string& summary_path) {
  const auto report =
      plr::compare_static_vs_adaptive(cfg.simulation, cfg.pipeline, cfg.static_threshold, rounds);
  write_output(out, plr::report_csv(report));
  if (!summary_path.empty()) {
    json summary = plr::report_summary(report);
    summary["meta"] = run_meta(cfg);
    plr::write_text_atomic(summary_path, plr::dump_json(summary));
  }
  return kExitOk;
}

int cmd_eval(const std::string& labels_path, const std::string& gt_path, double iou_thr,
             const std::string& out) {
  const auto labels = plr::labels_from_json(plr::read_json_file(labels_path));
  const auto gts = plr::load_ground_truth(gt_path);
  write_output(out, plr::pr_csv(plr::pr_metrics(labels, gts, iou_thr)));
  return kExitOk;
}

std::vector<plr::ObjectFeature> features_from_json(const json& arr, plr::FeatureRole role) {
  std::vector<plr::ObjectFeature> out;
  std::size_t id = 0;
  for (const auto& f : arr) {
    plr::ObjectFeature o;
    o.object_id = f.value("object_id", id);
    o.class_id = f.at("class_id").get<plr::ClassId>();
    o.confidence = f.value("C", 0.0);
    o.role = role;
    o.feature = f.at("feature").get<std::vector<double>>();
    out.push_back(std::move(o));
    ++id;
  }
  return out;
}

json evaluate_losses(const plr::RunConfig& cfg, const json& batch) {
  if (!batch.is_object()) throw plr::ValidationError("loss batch must be a JSON object");
  json out = json::object();
  try {
    for (const auto& [key, section] : batch.items()) {
      if (key == "varifocal") {
        const auto p = section.at("p").get<std::vector<double>>();
        const auto q = section.at("q").get<std::vector<double>>();
        const std::string red = section.value("reduction", std::string("sum"));
        if (red != "sum" && red != "mean") {
          throw plr::ValidationError("varifocal.reduction must be 'sum' or 'mean'");
        }
        json per = json::array();
        for (std::size_t i = 0; i < std::min(p.size(), q.size()); ++i) {
          per.push_back(plr::varifocal_loss(p[i], q[i], cfg.varifocal));
        }
        out[key] = {{"per_element", per},
                    {"reduced", plr::varifocal_loss(p, q, cfg.varifocal,
                                                    red == "mean" ? plr::Reduction::kMean
                                                                  : plr::Reduction::kSum)}};
      } else if (key == "combined_confidence") {
        json vals = json::array();
        for (const auto& pair : section) {
          vals.push_back(plr::combined_confidence(pair.at(0).get<double>(), pair.at(1).get<double>()));
        }
        out[key] = vals;
      } else if (key == "reweight") {
        json vals = json::array();
        for (const auto& c : section) {
          const auto w = plr::reweight_coefficients(c.get<double>());
          vals.push_back({{"cls_weight", w.cls_weight}, {"reg_weight", w.reg_weight}});
        }
        out[key] = vals;
      } else if (key == "unsup_boxes") {
        std::vector<plr::BoxLossTerms> boxes;
        for (const auto& b : section) {
          boxes.push_back({b.at("l_cls").get<double>(), b.at("l_vfl").get<double>(),
                           b.at("l_reg").get<double>(), b.at("C").get<double>()});
        }
        out[key] = plr::weighted_unsup_loss(boxes);
      } else if (key == "discriminator") {
        json vals = json::array();
        for (const auto& d : section) {
          const auto scores = d.at("scores").get<std::vector<double>>();
          vals.push_back(plr::discriminator_loss(d.at("d").get<int>(), scores));
        }
        out[key] = vals;
      } else if (key == "adversarial") {
        const plr::AdversarialTerms t{section.value("enc_global", 0.0), section.value("dec_global", 0.0),
                                      section.value("enc_local", 0.0), section.value("dec_local", 0.0)};
        out[key] = plr::adversarial_total(t, cfg.losses);
      } else if (key == "stage") {
        const plr::StageInputs in{section.value("sup", 0.0), section.value("unsup", 0.0),
                                  section.value("contra", 0.0), section.value("adv", 0.0)};
        const auto s = plr::stage_losses(in, cfg.losses);
        out[key] = {{"student", s.student}, {"burn", s.burn}, {"mutual", s.mutual}};
      } else if (key == "contrastive_weights") {
        std::vector<plr::WeightInput> objs;
        for (const auto& o : section) objs.push_back({o.at("C").get<double>(), o.at("tau").get<double>()});
        out[key] = plr::contrastive_weights(objs, cfg.contrastive.threshold_exponent);
      } else if (key == "supcon") {
        const auto anchors = features_from_json(section.at("anchors"), plr::FeatureRole::kAnchor);
        const auto cands = features_from_json(section.at("candidates"), plr::FeatureRole::kCandidate);
        const auto weights = section.at("weights").get<std::vector<double>>();
        const auto r = plr::supcon_loss(anchors, cands, weights, cfg.contrastive);
        out[key] = {{"loss", r.loss},
                    {"anchors_used", r.anchors_used},
                    {"skipped_no_positive", r.skipped_no_positive},
                    {"skipped_no_negative", r.skipped_no_negative}};
      } else {
        throw plr::ValidationError("unknown loss batch section '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw plr::ValidationError(std::string("loss batch: ") + e.what());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-label refinement toolkit"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path;
  bool print_config = false;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");

  std::string preds, out, thresholds_path, stats_path, labels_path, gt_path, input_path,
      summary_path;
  std::size_t rounds = 10;
  double iou_thr = 0.5;

  auto* fit = app.add_subcommand("fit-thresholds", "Fit per-class adaptive thresholds");
  fit->add_option("--preds", preds, "COCO-style prediction file")->required();
  fit->add_option("--out", out, "Output thresholds JSON")->required();

  auto* ref = app.add_subcommand("refine", "Filter predictions into weighted pseudo labels");
  ref->add_option("--preds", preds, "COCO-style prediction file")->required();
  ref->add_option("--thresholds", thresholds_path, "Thresholds JSON")->required();
  ref->add_option("--out", out, "Output pseudo-label JSON")->required();
  ref->add_option("--stats", stats_path, "Round statistics (JSON lines)");

  auto* sim = app.add_subcommand("simulate", "Compare static and adaptive thresholds on synthetic scenes");
  sim->add_option("--rounds", rounds, "Refinement rounds")->check(CLI::PositiveNumber);
  sim->add_option("--out", out, "Output report CSV")->required();
  sim->add_option("--summary", summary_path, "Output JSON summary");

  auto* ev = app.add_subcommand("eval", "Precision/recall of pseudo labels against ground truth");
  ev->add_option("--labels", labels_path, "Pseudo-label JSON")->required();
  ev->add_option("--gt", gt_path, "Ground-truth JSON")->required();
  ev->add_option("--iou", iou_thr, "IoU match threshold")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--out", out, "Output CSV")->required();

  auto* losses = app.add_subcommand("losses", "Evaluate loss terms for an encoded batch");
  losses->add_option("--input", input_path, "Loss batch JSON")->required();
  losses->add_option("--out", out, "Output JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return kExitValidation;
  }

  try {
    const plr::RunConfig cfg = load_config(config_path);
    if (print_config) {
      std::cout << plr::dump_json(plr::config_to_json(cfg));
      return kExitOk;
    }
    if (*fit) return cmd_fit_thresholds(cfg, preds, out);
    if (*ref) return cmd_refine(cfg, preds, thresholds_path, out, stats_path);
    if (*sim) return cmd_simulate(cfg, rounds, out, summary_path);
    if (*ev) return cmd_eval(labels_path, gt_path, iou_thr, out);
    if (*losses) {
      json result = evaluate_losses(cfg, plr::read_json_file(input_path));
      result["meta"] = run_meta(cfg);
      write_output(out, plr::dump_json(result));
      return kExitOk;
    }
    std::cout << app.help();
    return kExitValidation;
  } catch (const plr::ValidationError& e) {
    report_error("validation", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    report_error("runtime", e.what());
    return kExitRuntime;
  }
}
