#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scenediff/detections.hpp"
#include "scenediff/grid.hpp"

namespace scenediff {

// Closed pixel box: a point on an edge is inside.
struct GtBox {
  Side video = Side::Before;
  int frame_id = 0;
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  bool contains(double x, double y) const {
    return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
  }
  friend bool operator==(const GtBox&, const GtBox&) = default;
};

struct GtObject {
  int gt_id = 0;
  ChangeType change_type = ChangeType::Removed;
  std::vector<GtBox> boxes;
  friend bool operator==(const GtObject&, const GtObject&) = default;
};

struct GroundTruth {
  std::string scene_id;
  std::vector<GtObject> objects;
  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

inline void validate(const GroundTruth& gt) {
  for (const auto& o : gt.objects) {
    bool before = false, after = false;
    for (const auto& b : o.boxes) {
      if (!(b.xmin <= b.xmax && b.ymin <= b.ymax)) {
        throw Error(ErrorCode::MalformedInput,
                    "gt " + std::to_string(o.gt_id) + ": box corners out of order");
      }
      (b.video == Side::Before ? before : after) = true;
    }
    const bool ok = (o.change_type == ChangeType::Moved && before && after) ||
                    (o.change_type == ChangeType::Added && !before) ||
                    (o.change_type == ChangeType::Removed && !after);
    if (!ok) {
      throw Error(ErrorCode::MalformedInput,
                  "gt " + std::to_string(o.gt_id) + ": boxes inconsistent with change type");
    }
  }
}

inline nlohmann::ordered_json to_json(const GroundTruth& gt) {
  nlohmann::ordered_json j;
  j["scene_id"] = gt.scene_id;
  j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : gt.objects) {
    nlohmann::ordered_json jo;
    jo["gt_id"] = o.gt_id;
    jo["change_type"] = to_string(o.change_type);
    jo["boxes"] = nlohmann::ordered_json::array();
    for (const auto& b : o.boxes) {
      jo["boxes"].push_back({{"video", to_string(b.video)},
                             {"frame_id", b.frame_id},
                             {"xmin", b.xmin},
                             {"ymin", b.ymin},
                             {"xmax", b.xmax},
                             {"ymax", b.ymax}});
    }
    j["objects"].push_back(std::move(jo));
  }
  return j;
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  try {
    gt.scene_id = j.at("scene_id").get<std::string>();
    for (const auto& jo : j.at("objects")) {
      GtObject o;
      o.gt_id = jo.at("gt_id").get<int>();
      o.change_type = parse_change_type(jo.at("change_type").get<std::string>());
      for (const auto& jb : jo.at("boxes")) {
        o.boxes.push_back({parse_side(jb.at("video").get<std::string>()),
                           jb.at("frame_id").get<int>(), jb.at("xmin").get<double>(),
                           jb.at("ymin").get<double>(), jb.at("xmax").get<double>(),
                           jb.at("ymax").get<double>()});
      }
      gt.objects.push_back(std::move(o));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("ground truth: ") + e.what());
  }
  validate(gt);
  return gt;
}

inline GroundTruth load_ground_truth(const std::filesystem::path& path) {
  return ground_truth_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Average precision
// ---------------------------------------------------------------------------

enum class MatchLabel { TP, FP, Ignored };

constexpr const char* to_string(MatchLabel l) {
  switch (l) {
    case MatchLabel::TP: return "TP";
    case MatchLabel::FP: return "FP";
    case MatchLabel::Ignored: return "Ignored";
  }
  return "?";
}

struct RankedOutcome {
  double confidence = 0.0;
  MatchLabel label = MatchLabel::FP;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double confidence = 0.0;
};

struct ApResult {
  double ap = 0.0;
  int num_gt = 0;
  int num_tp = 0;
  int num_fp = 0;
  int num_ignored = 0;
  std::vector<PrPoint> curve;
};

// All-points AP under the monotone precision envelope. `ranked` must already
// be in evaluation order; Ignored entries are dropped. With no ground truth,
// AP is 1 when nothing was predicted and 0 otherwise.
inline ApResult average_precision(const std::vector<RankedOutcome>& ranked, int num_gt) {
  ApResult out;
  out.num_gt = num_gt;
  int tp = 0, fp = 0;
  for (const auto& r : ranked) {
    if (r.label == MatchLabel::Ignored) {
      ++out.num_ignored;
      continue;
    }
    (r.label == MatchLabel::TP ? tp : fp) += 1;
    out.curve.push_back({num_gt > 0 ? static_cast<double>(tp) / num_gt : 0.0,
                         static_cast<double>(tp) / (tp + fp), r.confidence});
  }
  out.num_tp = tp;
  out.num_fp = fp;
  if (num_gt == 0) {
    out.ap = (tp + fp) == 0 ? 1.0 : 0.0;
    return out;
  }
  std::vector<double> envelope(out.curve.size());
  double running = 0.0;
  for (std::size_t i = out.curve.size(); i-- > 0;) {
    running = std::max(running, out.curve[i].precision);
    envelope[i] = running;
  }
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < out.curve.size(); ++i) {
    out.ap += (out.curve[i].recall - prev_recall) * envelope[i];
    prev_recall = out.curve[i].recall;
  }
  return out;
}

// Tracks up to two matches per ground-truth unit: the first is a TP, the
// second Ignored, anything beyond is unavailable.
class MatchLedger {
 public:
  explicit MatchLedger(std::size_t units) : counts_(units, 0) {}

  // Picks the candidate with the fewest prior matches (lowest index on ties).
  MatchLabel claim(const std::vector<std::size_t>& candidates) {
    std::optional<std::size_t> pick;
    for (auto c : candidates) {
      if (counts_[c] >= 2) continue;
      if (!pick || counts_[c] < counts_[*pick]) pick = c;
    }
    if (!pick) return MatchLabel::FP;
    return counts_[*pick]++ == 0 ? MatchLabel::TP : MatchLabel::Ignored;
  }
  bool matched(std::size_t unit) const { return counts_[unit] > 0; }

 private:
  std::vector<int> counts_;
};

struct PerViewResult {
  ApResult ap;
  // labels[o][d]: outcome of detection d of object o in the input set.
  std::vector<std::vector<MatchLabel>> labels;
  // gt_matched[o][b]: box b of gt object o was hit.
  std::vector<std::vector<bool>> gt_matched;
};

struct PerSceneResult {
  ApResult ap;
  std::vector<std::optional<MatchLabel>> labels;  // per input object; nullopt if folded into a partner
  std::vector<bool> gt_matched;                   // per evaluation unit
};

namespace detail {

inline void check_scene(const DetectionSet& dets, const GroundTruth& gt) {
  if (dets.scene_id != gt.scene_id) {
    throw Error(ErrorCode::SceneMismatch,
                "predictions for '" + dets.scene_id + "' vs ground truth '" + gt.scene_id + "'");
  }
}

// Evaluation order: confidence descending, then object id, then position.
struct RankKey {
  double confidence;
  int object_id;
  std::size_t a;
  std::size_t b;
};

inline bool rank_before(const RankKey& x, const RankKey& y) {
  if (x.confidence != y.confidence) return x.confidence > y.confidence;
  if (x.object_id != y.object_id) return x.object_id < y.object_id;
  if (x.a != y.a) return x.a < y.a;
  return x.b < y.b;
}

// Highest-score detection of an object in `video` (first on ties).
inline const PointDetection* representative(const ObjectDetections& o,
                                            std::optional<Side> video = std::nullopt) {
  const PointDetection* best = nullptr;
  double best_score = 0.0;
  for (const auto& d : o.detections) {
    if (video && d.video != *video) continue;
    const double s = d.score.value_or(o.confidence);
    if (!best || s > best_score) {
      best = &d;
      best_score = s;
    }
  }
  return best;
}

}  // namespace detail

// Every GT box is a unit; every point detection is ranked by its object's
// confidence in one global sweep and matched within its own video + frame.
inline PerViewResult eval_per_view(const DetectionSet& dets, const GroundTruth& gt) {
  detail::check_scene(dets, gt);
  struct Unit {
    const GtBox* box;
    std::size_t obj, idx;
  };
  std::vector<Unit> units;
  for (std::size_t o = 0; o < gt.objects.size(); ++o)
    for (std::size_t b = 0; b < gt.objects[o].boxes.size(); ++b)
      units.push_back({&gt.objects[o].boxes[b], o, b});

  std::vector<detail::RankKey> order;
  PerViewResult out;
  out.labels.resize(dets.objects.size());
  for (std::size_t o = 0; o < dets.objects.size(); ++o) {
    out.labels[o].assign(dets.objects[o].detections.size(), MatchLabel::FP);
    for (std::size_t d = 0; d < dets.objects[o].detections.size(); ++d)
      order.push_back({dets.objects[o].confidence, dets.objects[o].object_id, o, d});
  }
  std::stable_sort(order.begin(), order.end(), detail::rank_before);

  MatchLedger ledger(units.size());
  std::vector<RankedOutcome> ranked;
  for (const auto& key : order) {
    const auto& det = dets.objects[key.a].detections[key.b];
    std::vector<std::size_t> candidates;
    for (std::size_t u = 0; u < units.size(); ++u) {
      const auto& box = *units[u].box;
      if (box.video == det.video && box.frame_id == det.frame_id && box.contains(det.x, det.y))
        candidates.push_back(u);
    }
    const auto label = ledger.claim(candidates);
    out.labels[key.a][key.b] = label;
    ranked.push_back({key.confidence, label});
  }
  out.gt_matched.resize(gt.objects.size());
  for (std::size_t o = 0; o < gt.objects.size(); ++o)
    out.gt_matched[o].assign(gt.objects[o].boxes.size(), false);
  for (std::size_t u = 0; u < units.size(); ++u)
    out.gt_matched[units[u].obj][units[u].idx] = ledger.matched(u);
  out.ap = average_precision(ranked, static_cast<int>(units.size()));
  return out;
}

// Object-level AP. Type-agnostic: each GT object splits into one unit per
// video it appears in and each predicted object is matched by its single
// highest-score point. Type-aware: GT objects stay whole, partnered Moved
// predictions are fused into one prediction that must hit the GT in both
// videos, and the predicted type must equal the GT type.
inline PerSceneResult eval_per_scene(const DetectionSet& dets, const GroundTruth& gt,
                                     bool type_aware) {
  detail::check_scene(dets, gt);
  struct Unit {
    std::size_t gt_index;
    std::optional<Side> video;  // type-agnostic units are single-video
  };
  std::vector<Unit> units;
  for (std::size_t o = 0; o < gt.objects.size(); ++o) {
    if (type_aware) {
      units.push_back({o, std::nullopt});
      continue;
    }
    for (Side v : {Side::Before, Side::After}) {
      const auto& boxes = gt.objects[o].boxes;
      if (std::any_of(boxes.begin(), boxes.end(), [&](const GtBox& b) { return b.video == v; }))
        units.push_back({o, v});
    }
  }

  auto inside = [&](const PointDetection& p, const GtObject& g) {
    return std::any_of(g.boxes.begin(), g.boxes.end(), [&](const GtBox& b) {
      return b.video == p.video && b.frame_id == p.frame_id && b.contains(p.x, p.y);
    });
  };

  // Predictions: indices into dets.objects; a fused Moved pair lists both.
  struct Prediction {
    std::vector<std::size_t> members;
    double confidence;
    int object_id;
  };
  std::vector<Prediction> predictions;
  PerSceneResult out;
  out.labels.assign(dets.objects.size(), std::nullopt);
  std::map<int, std::size_t> by_id;
  for (std::size_t i = 0; i < dets.objects.size(); ++i) by_id[dets.objects[i].object_id] = i;
  std::vector<bool> folded(dets.objects.size(), false);
  for (std::size_t i = 0; i < dets.objects.size(); ++i) {
    if (folded[i]) continue;
    const auto& o = dets.objects[i];
    Prediction p{{i}, o.confidence, o.object_id};
    if (type_aware && o.change_type == ChangeType::Moved && o.partner_id) {
      auto it = by_id.find(*o.partner_id);
      if (it != by_id.end() && it->second != i && !folded[it->second]) {
        const auto& partner = dets.objects[it->second];
        p.members.push_back(it->second);
        p.confidence = std::max(p.confidence, partner.confidence);
        p.object_id = std::min(p.object_id, partner.object_id);
        folded[it->second] = true;
      }
    }
    folded[i] = true;
    predictions.push_back(std::move(p));
  }

  std::vector<detail::RankKey> order;
  for (std::size_t p = 0; p < predictions.size(); ++p)
    order.push_back({predictions[p].confidence, predictions[p].object_id, p, 0});
  std::stable_sort(order.begin(), order.end(), detail::rank_before);

  MatchLedger ledger(units.size());
  std::vector<RankedOutcome> ranked;
  for (const auto& key : order) {
    const auto& pred = predictions[key.a];
    std::vector<std::size_t> candidates;
    if (!type_aware) {
      const auto* rep = detail::representative(dets.objects[pred.members[0]]);
      if (rep) {
        for (std::size_t u = 0; u < units.size(); ++u)
          if (rep->video == *units[u].video && inside(*rep, gt.objects[units[u].gt_index]))
            candidates.push_back(u);
      }
    } else {
      const auto& head = dets.objects[pred.members[0]];
      const ChangeType type = head.change_type;
      // Representative point per video across the fused members.
      const PointDetection* rep[2] = {nullptr, nullptr};
      double rep_score[2] = {0.0, 0.0};
      for (auto m : pred.members) {
        for (Side v : {Side::Before, Side::After}) {
          const auto* r = detail::representative(dets.objects[m], v);
          const int k = v == Side::After;
          const double s = r ? r->score.value_or(dets.objects[m].confidence) : 0.0;
          if (r && (!rep[k] || s > rep_score[k])) {
            rep[k] = r;
            rep_score[k] = s;
          }
        }
      }
      for (std::size_t u = 0; u < units.size(); ++u) {
        const auto& g = gt.objects[units[u].gt_index];
        if (g.change_type != type) continue;
        bool hit = false;
        if (type == ChangeType::Moved) {
          hit = pred.members.size() == 2 && rep[0] && rep[1] && inside(*rep[0], g) &&
                inside(*rep[1], g);
        } else {
          const auto* r = detail::representative(head);
          hit = r && inside(*r, g);
        }
        if (hit) candidates.push_back(u);
      }
    }
    const auto label = ledger.claim(candidates);
    for (auto m : pred.members) out.labels[m] = label;
    ranked.push_back({key.confidence, label});
  }
  out.gt_matched.resize(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) out.gt_matched[u] = ledger.matched(u);
  out.ap = average_precision(ranked, static_cast<int>(units.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Masks to boxes
// ---------------------------------------------------------------------------

struct InstanceMask {
  int gt_id = 0;
  ChangeType change_type = ChangeType::Removed;
  Side video = Side::Before;
  int frame_id = 0;
  Grid<std::uint8_t> mask;
};

// Tight closed pixel box of a non-empty mask.
inline GtBox mask_to_box(const InstanceMask& m) {
  int xmin = m.mask.width(), ymin = m.mask.height(), xmax = -1, ymax = -1;
  for (int y = 0; y < m.mask.height(); ++y)
    for (int x = 0; x < m.mask.width(); ++x)
      if (m.mask(y, x)) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
  if (xmax < 0) {
    throw Error(ErrorCode::EmptyMask, "gt " + std::to_string(m.gt_id) + " frame " +
                                          std::to_string(m.frame_id) + " has an empty mask");
  }
  return {m.video, m.frame_id, double(xmin), double(ymin), double(xmax), double(ymax)};
}

// Converts per-frame instance masks to boxes, keeping only frames whose id
// is a multiple of `frame_stride` (e.g. 30 for 1 fps from 30 fps footage).
inline GroundTruth masks_to_gt(const std::string& scene_id, const std::vector<InstanceMask>& masks,
                               int frame_stride = 1) {
  GroundTruth gt;
  gt.scene_id = scene_id;
  std::map<int, std::size_t> index;
  for (const auto& m : masks) {
    if (frame_stride > 1 && m.frame_id % frame_stride != 0) continue;
    const auto box = mask_to_box(m);
    auto [it, inserted] = index.try_emplace(m.gt_id, gt.objects.size());
    if (inserted) gt.objects.push_back({m.gt_id, m.change_type, {}});
    gt.objects[it->second].boxes.push_back(box);
  }
  return gt;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct EvalReport {
  std::string scene_id;
  ApResult per_view;
  ApResult per_scene;
  ApResult per_scene_type;
};

inline EvalReport evaluate(const DetectionSet& dets, const GroundTruth& gt) {
  return {gt.scene_id, eval_per_view(dets, gt).ap, eval_per_scene(dets, gt, false).ap,
          eval_per_scene(dets, gt, true).ap};
}

inline nlohmann::ordered_json ap_json(const ApResult& r) {
  nlohmann::ordered_json j;
  j["ap"] = r.ap;
  j["num_gt"] = r.num_gt;
  j["tp"] = r.num_tp;
  j["fp"] = r.num_fp;
  j["ignored"] = r.num_ignored;
  auto curve = nlohmann::ordered_json::array();
  for (const auto& p : r.curve)
    curve.push_back({{"confidence", p.confidence}, {"recall", p.recall}, {"precision", p.precision}});
  j["pr_curve"] = std::move(curve);
  return j;
}

inline nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["scene_id"] = report.scene_id;
  j["per_view_ap"] = report.per_view.ap;
  j["per_scene_ap"] = report.per_scene.ap;
  j["per_scene_ap_type"] = report.per_scene_type.ap;
  j["breakdown"] = {{"per_view", ap_json(report.per_view)},
                    {"per_scene", ap_json(report.per_scene)},
                    {"per_scene_type", ap_json(report.per_scene_type)}};
  return j;
}

inline std::string pr_curve_csv(const EvalReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "metric,rank,confidence,recall,precision\n";
  const std::pair<const char*, const ApResult*> metrics[] = {
      {"per_view", &report.per_view},
      {"per_scene", &report.per_scene},
      {"per_scene_type", &report.per_scene_type}};
  for (const auto& [name, r] : metrics) {
    for (std::size_t i = 0; i < r->curve.size(); ++i) {
      os << name << ',' << i << ',' << r->curve[i].confidence << ',' << r->curve[i].recall << ','
         << r->curve[i].precision << '\n';
    }
  }
  return os.str();
}

}  // namespace scenediff
