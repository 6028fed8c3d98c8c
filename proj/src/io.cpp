#include "plr/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "plr/error.hpp"
#include "plr/text.hpp"

namespace plr {

namespace fs = std::filesystem;

nlohmann::json parse_json_text(std::string_view text, const std::string& source) {
  try {
    return nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    // e.byte is 1-based and points at the offending character.
    const std::size_t offset = e.byte == 0 ? 0 : std::min<std::size_t>(e.byte - 1, text.size());
    std::size_t line = 1;
    std::size_t line_start = 0;
    for (std::size_t i = 0; i < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        line_start = i + 1;
      }
    }
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = text.size();
    std::ostringstream msg;
    msg << source << ":" << line << ":" << (offset - line_start + 1)
        << ": malformed JSON: " << e.what() << "\n  "
        << text.substr(line_start, std::min<std::size_t>(line_end - line_start, 120));
    throw ValidationError(msg.str());
  }
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json_file(const fs::path& path) {
  return parse_json_text(read_text_file(path), path.string());
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_text_atomic(const fs::path& path, std::string_view content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  const fs::path tmp =
      dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot rename into " + path.string() + ": " + ec.message());
  }
}

namespace {

double unit_field(const nlohmann::json& rec, const char* key, std::size_t index) {
  if (!rec.contains(key)) {
    throw ValidationError("prediction " + std::to_string(index) + ": missing field '" + key + "'");
  }
  const auto& v = rec[key];
  if (!v.is_number()) {
    throw ValidationError("prediction " + std::to_string(index) + ": '" + key +
                          "' must be a number");
  }
  const double x = v.get<double>();
  if (!(x >= 0.0 && x <= 1.0)) {
    throw ValidationError("prediction " + std::to_string(index) + ": '" + key + "' = " +
                          format_double(x) + " outside [0, 1]");
  }
  return x;
}

template <typename T>
T integer_field(const nlohmann::json& rec, const char* key, const std::string& where) {
  if (!rec.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  const auto& v = rec[key];
  if (!v.is_number_integer()) throw ValidationError(where + ": '" + key + "' must be an integer");
  return v.get<T>();
}

BoxCoords xywh_field(const nlohmann::json& rec, const std::string& where) {
  if (!rec.contains("bbox")) throw ValidationError(where + ": missing field 'bbox'");
  const auto& b = rec["bbox"];
  if (!b.is_array() || b.size() != 4) {
    throw ValidationError(where + ": 'bbox' must be [x, y, w, h]");
  }
  BoxCoords out{};
  for (std::size_t k = 0; k < 4; ++k) {
    if (!b[k].is_number()) throw ValidationError(where + ": 'bbox' entries must be numbers");
    out[k] = b[k].get<double>();
    if (!std::isfinite(out[k])) throw ValidationError(where + ": 'bbox' must be finite");
  }
  if (out[2] < 0.0 || out[3] < 0.0) {
    throw ValidationError(where + ": 'bbox' width and height must be >= 0");
  }
  return out;
}

}  // namespace

std::vector<PredictionRecord> parse_prediction_records(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ValidationError("predictions must be a JSON array");
  std::vector<PredictionRecord> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    const std::string where = "prediction " + std::to_string(i);
    if (!rec.is_object()) throw ValidationError(where + ": must be an object");
    PredictionRecord r;
    r.image_id = integer_field<ImageId>(rec, "image_id", where);
    r.category_id = integer_field<ClassId>(rec, "category_id", where);
    if (r.category_id < 0) throw ValidationError(where + ": 'category_id' must be >= 0");
    r.bbox = xywh_field(rec, where);
    r.score = unit_field(rec, "score", i);
    r.iou_score = unit_field(rec, "iou_score", i);
    for (const auto& [key, value] : rec.items()) {
      if (key != "image_id" && key != "category_id" && key != "bbox" && key != "score" &&
          key != "iou_score") {
        r.extra[key] = value;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json prediction_records_to_json(const std::vector<PredictionRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json j = r.extra.is_object() ? r.extra : nlohmann::json::object();
    j["image_id"] = r.image_id;
    j["category_id"] = r.category_id;
    j["bbox"] = r.bbox;
    j["score"] = r.score;
    j["iou_score"] = r.iou_score;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<PredictionRecord> load_prediction_records(const fs::path& path) {
  return parse_prediction_records(read_json_file(path));
}

std::vector<ImageDetections> records_to_detections(const std::vector<PredictionRecord>& records,
                                                   std::size_t num_classes) {
  std::size_t width = num_classes;
  if (width == 0) {
    for (const auto& r : records) {
      width = std::max(width, static_cast<std::size_t>(r.category_id) + 1);
    }
  }
  std::map<ImageId, ImageDetections> grouped;
  for (const auto& r : records) {
    if (static_cast<std::size_t>(r.category_id) >= width) {
      throw ValidationError("category_id " + std::to_string(r.category_id) +
                            " exceeds configured class count");
    }
    std::vector<double> scores(width, 0.0);
    scores[static_cast<std::size_t>(r.category_id)] = r.score;
    Detection d = Detection::make(to_bbox(r.bbox, {BoxLayout::kXywh, false}),
                                  std::move(scores), r.iou_score);
    // A zero score ties with every other class; keep the recorded category.
    d.predicted_class = r.category_id;
    auto& img = grouped[r.image_id];
    img.image_id = r.image_id;
    img.detections.push_back(std::move(d));
  }
  std::vector<ImageDetections> out;
  out.reserve(grouped.size());
  for (auto& [id, img] : grouped) out.push_back(std::move(img));
  return out;
}

std::vector<ImageDetections> load_predictions(const fs::path& path, std::size_t num_classes) {
  return records_to_detections(load_prediction_records(path), num_classes);
}

std::vector<ImageGroundTruth> parse_ground_truth(const nlohmann::json& doc) {
  const nlohmann::json* anns = &doc;
  std::map<ImageId, ImageGroundTruth> grouped;
  if (doc.is_object()) {
    if (!doc.contains("annotations")) {
      throw ValidationError("ground truth object lacks 'annotations'");
    }
    anns = &doc["annotations"];
    if (doc.contains("images")) {
      for (const auto& img : doc["images"]) {
        const auto id = integer_field<ImageId>(img, "id", "image entry");
        grouped[id].image_id = id;
      }
    }
  }
  if (!anns->is_array()) throw ValidationError("ground truth annotations must be an array");
  for (std::size_t i = 0; i < anns->size(); ++i) {
    const auto& a = (*anns)[i];
    const std::string where = "annotation " + std::to_string(i);
    if (!a.is_object()) throw ValidationError(where + ": must be an object");
    const auto id = integer_field<ImageId>(a, "image_id", where);
    GroundTruthObject o;
    o.class_id = integer_field<ClassId>(a, "category_id", where);
    o.box = to_bbox(xywh_field(a, where), {BoxLayout::kXywh, false});
    auto& img = grouped[id];
    img.image_id = id;
    img.objects.push_back(o);
  }
  std::vector<ImageGroundTruth> out;
  for (auto& [id, img] : grouped) out.push_back(std::move(img));
  return out;
}

std::vector<ImageGroundTruth> load_ground_truth(const fs::path& path) {
  return parse_ground_truth(read_json_file(path));
}

nlohmann::json ground_truth_to_json(const std::vector<ImageGroundTruth>& gts) {
  nlohmann::json images = nlohmann::json::array();
  nlohmann::json anns = nlohmann::json::array();
  std::size_t next_id = 1;
  for (const auto& img : gts) {
    images.push_back({{"id", img.image_id}});
    for (const auto& o : img.objects) {
      anns.push_back({{"id", next_id++},
                      {"image_id", img.image_id},
                      {"category_id", o.class_id},
                      {"bbox", from_bbox(o.box, {BoxLayout::kXywh, false})}});
    }
  }
  return {{"images", std::move(images)}, {"annotations", std::move(anns)}};
}

std::string pr_csv(const std::map<ClassId, PrCounts>& metrics) {
  std::ostringstream out;
  out << "class_id,labels,gt,true_positives,precision,recall\n";
  for (const auto& [cls, m] : metrics) {
    out << cls << ',' << m.labels << ',' << m.gt << ',' << m.true_positives << ','
        << format_double(m.precision()) << ',' << format_double(m.recall()) << '\n';
  }
  return out.str();
}

}  // namespace plr
