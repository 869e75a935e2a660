#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scenediff/assets.hpp"
#include "scenediff/error.hpp"

namespace scenediff {

enum class ChangeType { Added, Removed, Moved };

constexpr const char* to_string(ChangeType t) {
  switch (t) {
    case ChangeType::Added: return "Added";
    case ChangeType::Removed: return "Removed";
    case ChangeType::Moved: return "Moved";
  }
  return "?";
}

inline ChangeType parse_change_type(const std::string& s) {
  if (s == "Added") return ChangeType::Added;
  if (s == "Removed") return ChangeType::Removed;
  if (s == "Moved") return ChangeType::Moved;
  throw Error(ErrorCode::MalformedInput, "unknown change_type '" + s + "'");
}

inline Side parse_side(const std::string& s) {
  if (s == "before") return Side::Before;
  if (s == "after") return Side::After;
  throw Error(ErrorCode::MalformedInput, "unknown video '" + s + "'");
}

struct PointDetection {
  Side video = Side::Before;
  int frame_id = 0;
  double x = 0.0;
  double y = 0.0;
  // Region-level score; selects an object's representative point. Falls
  // back to the object confidence when absent.
  std::optional<double> score;
  friend bool operator==(const PointDetection&, const PointDetection&) = default;
};

struct ObjectDetections {
  int object_id = 0;
  Side side = Side::Before;
  ChangeType change_type = ChangeType::Removed;
  double confidence = 0.0;
  std::optional<int> partner_id;
  std::vector<PointDetection> detections;
  friend bool operator==(const ObjectDetections&, const ObjectDetections&) = default;
};

struct DetectionSet {
  std::string scene_id;
  std::vector<ObjectDetections> objects;
  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

inline nlohmann::ordered_json to_json(const DetectionSet& set) {
  nlohmann::ordered_json j;
  j["scene_id"] = set.scene_id;
  j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : set.objects) {
    nlohmann::ordered_json jo;
    jo["object_id"] = o.object_id;
    jo["side"] = to_string(o.side);
    jo["change_type"] = to_string(o.change_type);
    jo["confidence"] = o.confidence;
    if (o.partner_id) jo["partner_id"] = *o.partner_id;
    jo["detections"] = nlohmann::ordered_json::array();
    for (const auto& d : o.detections) {
      nlohmann::ordered_json jd;
      jd["video"] = to_string(d.video);
      jd["frame_id"] = d.frame_id;
      jd["x"] = d.x;
      jd["y"] = d.y;
      if (d.score) jd["score"] = *d.score;
      jo["detections"].push_back(std::move(jd));
    }
    j["objects"].push_back(std::move(jo));
  }
  return j;
}

inline DetectionSet detection_set_from_json(const nlohmann::json& j) {
  DetectionSet set;
  try {
    set.scene_id = j.at("scene_id").get<std::string>();
    for (const auto& jo : j.at("objects")) {
      ObjectDetections o;
      o.object_id = jo.at("object_id").get<int>();
      o.side = parse_side(jo.value("side", std::string("before")));
      o.change_type = parse_change_type(jo.at("change_type").get<std::string>());
      o.confidence = jo.at("confidence").get<double>();
      if (jo.contains("partner_id") && !jo["partner_id"].is_null()) {
        o.partner_id = jo["partner_id"].get<int>();
      }
      for (const auto& jd : jo.at("detections")) {
        PointDetection d;
        d.video = parse_side(jd.at("video").get<std::string>());
        d.frame_id = jd.at("frame_id").get<int>();
        d.x = jd.at("x").get<double>();
        d.y = jd.at("y").get<double>();
        if (jd.contains("score")) d.score = jd["score"].get<double>();
        o.detections.push_back(d);
      }
      set.objects.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("detection set: ") + e.what());
  }
  return set;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "failed to write " + path.string());
}

inline DetectionSet load_detection_set(const std::filesystem::path& path) {
  return detection_set_from_json(read_json_file(path));
}

}  // namespace scenediff
