#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "plr/detection.hpp"
#include "plr/geometry.hpp"
#include "plr/simulation.hpp"

namespace plr {

/// One COCO-results record with the iou_score extension. Fields not listed
/// here are kept in `extra` and written back unchanged.
struct PredictionRecord {
  ImageId image_id = 0;
  ClassId category_id = 0;
  BoxCoords bbox{};  // x, y, w, h
  double score = 0.0;
  double iou_score = 0.0;
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

/// Parses JSON text; syntax errors become ValidationError with line/column.
nlohmann::json parse_json_text(std::string_view text, const std::string& source = "<input>");
nlohmann::json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Canonical dump: sorted keys, two-space indent, shortest round-trip floats,
/// trailing newline.
std::string dump_json(const nlohmann::json& j);

/// Writes to a sibling temporary file and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

std::vector<PredictionRecord> parse_prediction_records(const nlohmann::json& doc);
nlohmann::json prediction_records_to_json(const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> load_prediction_records(const std::filesystem::path& path);

/// Converts records into per-image detections (xywh -> corner), grouped by
/// image id in ascending order with input order kept inside each image. Each
/// record becomes a detection whose score vector is zero except at its
/// category. num_classes = 0 sizes the vector to the largest category + 1.
std::vector<ImageDetections> records_to_detections(const std::vector<PredictionRecord>& records,
                                                   std::size_t num_classes = 0);
std::vector<ImageDetections> load_predictions(const std::filesystem::path& path,
                                              std::size_t num_classes = 0);

/// Accepts either a bare array of {image_id, category_id, bbox} annotations
/// or a COCO object with "annotations" (and optionally "images").
std::vector<ImageGroundTruth> parse_ground_truth(const nlohmann::json& doc);
std::vector<ImageGroundTruth> load_ground_truth(const std::filesystem::path& path);
nlohmann::json ground_truth_to_json(const std::vector<ImageGroundTruth>& gts);

/// CSV: class_id,labels,gt,true_positives,precision,recall
std::string pr_csv(const std::map<ClassId, PrCounts>& metrics);

}  // namespace plr
