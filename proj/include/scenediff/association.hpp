#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "scenediff/detections.hpp"
#include "scenediff/geometry.hpp"
#include "scenediff/pairing.hpp"
#include "scenediff/scoring.hpp"

namespace scenediff {

// Per-frame region scores together with the region geometry needed for 3D
// aggregation and association. Vectors are indexed like RegionMap::regions.
struct FrameChangeScores {
  std::vector<double> score;
  std::vector<int> pair_count;
  std::vector<PointCloud> clouds;  // unprojected valid region pixels
};

// One directional scoring result: the source frame's regions scored against dst.
struct DirectedRegionScores {
  Side side = Side::Before;  // side of the source frame
  int src = 0;
  int dst = 0;
  RegionScoreMap scores;
};

inline std::vector<PointCloud> region_clouds(const FrameAsset& frame) {
  std::vector<PointCloud> clouds(frame.regions.regions.size());
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      const int label = frame.regions.labels(y, x);
      if (label <= 0 || !frame.depth.is_valid(y, x)) continue;
      clouds[frame.regions.index_of(label)].points.push_back(
          unproject_pixel(frame, x, y, frame.depth.values(y, x)));
    }
  }
  return clouds;
}

// Arithmetic mean of each region's fused score over every directed pair in
// which the frame is the source. Results are summed in `directed` order.
inline std::vector<FrameChangeScores> average_frame_scores(
    const std::vector<FrameAsset>& frames, Side side,
    const std::vector<DirectedRegionScores>& directed) {
  std::vector<FrameChangeScores> out(frames.size());
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const std::size_t regions = frames[n].regions.regions.size();
    out[n].score.assign(regions, 0.0);
    out[n].pair_count.assign(regions, 0);
  }
  std::vector<int> pairs_per_frame(frames.size(), 0);
  for (const auto& d : directed) {
    if (d.side != side) continue;
    auto& f = out[d.src];
    ++pairs_per_frame[d.src];
    for (std::size_t r = 0; r < f.score.size(); ++r) {
      f.score[r] += d.scores.delta[r];
      ++f.pair_count[r];
    }
  }
  for (std::size_t n = 0; n < frames.size(); ++n) {
    if (pairs_per_frame[n] == 0) continue;
    for (auto& s : out[n].score) s /= pairs_per_frame[n];
  }
  return out;
}

// Every valid region pixel of the side carries its region's score into a
// voxel grid; each region is then re-scored as the mean of its pixels' voxel
// means. Clouds in `scores` must be filled.
inline void voxel_consistency(std::vector<FrameChangeScores>& scores, double voxel_size = 0.02) {
  VoxelAccumulator acc(voxel_size);
  for (const auto& frame : scores) {
    for (std::size_t r = 0; r < frame.clouds.size(); ++r) {
      for (const auto& p : frame.clouds[r].points) acc.add(p, frame.score[r]);
    }
  }
  for (auto& frame : scores) {
    for (std::size_t r = 0; r < frame.clouds.size(); ++r) {
      const auto& pts = frame.clouds[r].points;
      if (pts.empty()) continue;
      double sum = 0.0;
      for (const auto& p : pts) sum += acc.mean_at(p);
      frame.score[r] = sum / static_cast<double>(pts.size());
    }
  }
}

struct DetectedRegion {
  Side side = Side::Before;
  int frame_index = 0;
  int frame_id = 0;
  int region_index = 0;
  std::int32_t label = 0;
  double score = 0.0;
  Eigen::VectorXd feature;  // unit-normalized mean-pooled feature
  const PointCloud* cloud = nullptr;
};

// Regions of one side whose score strictly exceeds tau, in (frame, label) order.
inline std::vector<DetectedRegion> detect_regions(const std::vector<FrameAsset>& frames,
                                                  Side side,
                                                  const std::vector<FrameChangeScores>& scores,
                                                  const std::vector<RegionFeatures>& features,
                                                  double tau) {
  std::vector<DetectedRegion> out;
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const auto& f = scores[n];
    for (std::size_t r = 0; r < f.score.size(); ++r) {
      if (!(f.score[r] > tau)) continue;
      DetectedRegion d;
      d.side = side;
      d.frame_index = static_cast<int>(n);
      d.frame_id = frames[n].frame_id;
      d.region_index = static_cast<int>(r);
      d.label = frames[n].regions.regions[r].label;
      d.score = f.score[r];
      d.feature = features[n].mean[r];
      const double norm = d.feature.norm();
      if (norm > 0.0) d.feature /= norm;
      d.cloud = r < f.clouds.size() ? &f.clouds[r] : nullptr;
      out.push_back(std::move(d));
    }
  }
  return out;
}

struct ObjectMember {
  int frame_index = 0;
  int frame_id = 0;
  std::int32_t label = 0;
  double score = 0.0;
  friend bool operator==(const ObjectMember&, const ObjectMember&) = default;
};

struct ChangedObject {
  int object_id = 0;
  Side side = Side::Before;
  Eigen::VectorXd feature;
  PointCloud cloud;
  std::vector<ObjectMember> members;
  int n_merged = 0;
  double confidence = 0.0;
  ChangeType change_type = ChangeType::Removed;
  std::optional<int> moved_partner;
};

// Spatial hash over an object's points for "any point within sqrt(sigma)"
// queries; cell size equals the query radius so 27 cells cover the ball.
class ProximityIndex {
 public:
  explicit ProximityIndex(double radius_sq)
      : radius_sq_(radius_sq), cell_(std::sqrt(radius_sq)) {}

  void insert(const Eigen::Vector3d& p) { cells_[key(p)].push_back(p); }

  bool any_within(const Eigen::Vector3d& p) const {
    const auto k = key(p);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find({k[0] + dx, k[1] + dy, k[2] + dz});
          if (it == cells_.end()) continue;
          for (const auto& q : it->second)
            if ((p - q).squaredNorm() < radius_sq_) return true;
        }
    return false;
  }

 private:
  VoxelIndex key(const Eigen::Vector3d& p) const {
    return {static_cast<int>(std::floor(p.x() / cell_)),
            static_cast<int>(std::floor(p.y() / cell_)),
            static_cast<int>(std::floor(p.z() / cell_))};
  }

  double radius_sq_;
  double cell_;
  std::unordered_map<VoxelIndex, std::vector<Eigen::Vector3d>, VoxelIndexHash> cells_;
};

struct AssociationConfig {
  double sigma_geo = 0.02;
  double sigma_merge = 1.4;
};

// Fraction of `points` whose squared distance to the indexed cloud is below
// sigma_geo.
inline double geometric_overlap(const PointCloud& points, const ProximityIndex& index) {
  if (points.empty()) return 0.0;
  std::size_t close = 0;
  for (const auto& p : points.points)
    if (index.any_within(p)) ++close;
  return static_cast<double>(close) / static_cast<double>(points.size());
}

// Greedy cross-frame merging of one side's detected regions. Regions of the
// first frame seed the object set; every later region joins the object with
// the highest cos + overlap if that exceeds sigma_merge, else starts a new one.
inline std::vector<ChangedObject> associate(const std::vector<DetectedRegion>& regions,
                                            const AssociationConfig& config = {}) {
  std::vector<ChangedObject> objects;
  std::vector<ProximityIndex> indices;
  if (regions.empty()) return objects;
  const int first_frame = std::min_element(regions.begin(), regions.end(),
                                           [](const auto& a, const auto& b) {
                                             return a.frame_index < b.frame_index;
                                           })->frame_index;
  std::vector<const DetectedRegion*> order;
  for (const auto& r : regions) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->frame_index < b->frame_index; });

  auto spawn = [&](const DetectedRegion& r) {
    ChangedObject o;
    o.side = r.side;
    o.feature = r.feature;
    if (r.cloud) o.cloud = *r.cloud;
    o.members.push_back({r.frame_index, r.frame_id, r.label, r.score});
    o.n_merged = 1;
    o.confidence = r.score;
    ProximityIndex idx(config.sigma_geo);
    for (const auto& p : o.cloud.points) idx.insert(p);
    objects.push_back(std::move(o));
    indices.push_back(std::move(idx));
  };

  for (const auto* r : order) {
    if (r->frame_index == first_frame) {
      spawn(*r);
      continue;
    }
    double best = -std::numeric_limits<double>::infinity();
    int best_object = -1;
    const PointCloud empty;
    const PointCloud& pts = r->cloud ? *r->cloud : empty;
    for (std::size_t o = 0; o < objects.size(); ++o) {
      const double s = cosine(r->feature, objects[o].feature) + geometric_overlap(pts, indices[o]);
      if (s > best) {
        best = s;
        best_object = static_cast<int>(o);
      }
    }
    if (best_object >= 0 && best > config.sigma_merge) {
      auto& o = objects[best_object];
      const double w = 1.0 / (o.n_merged + 1);
      o.feature = w * r->feature + (1.0 - w) * o.feature;
      for (const auto& p : pts.points) {
        o.cloud.points.push_back(p);
        indices[best_object].insert(p);
      }
      o.members.push_back({r->frame_index, r->frame_id, r->label, r->score});
      ++o.n_merged;
      o.confidence = std::max(o.confidence, r->score);
    } else {
      spawn(*r);
    }
  }
  return objects;
}

// Greedy best-first cross-side matching on feature cosine above tau_sim.
// Matched objects become Moved partners; the rest are Removed (before) or
// Added (after).
inline void classify(std::vector<ChangedObject>& before, std::vector<ChangedObject>& after,
                     double tau_sim = 0.7) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  for (std::size_t b = 0; b < before.size(); ++b)
    for (std::size_t a = 0; a < after.size(); ++a) {
      const double c = cosine(before[b].feature, after[a].feature);
      if (c > tau_sim) candidates.emplace_back(c, b, a);
    }
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& x, const auto& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    if (std::get<1>(x) != std::get<1>(y)) return std::get<1>(x) < std::get<1>(y);
    return std::get<2>(x) < std::get<2>(y);
  });
  for (auto& o : before) {
    o.change_type = ChangeType::Removed;
    o.moved_partner.reset();
  }
  for (auto& o : after) {
    o.change_type = ChangeType::Added;
    o.moved_partner.reset();
  }
  std::vector<bool> used_b(before.size(), false), used_a(after.size(), false);
  for (const auto& [c, b, a] : candidates) {
    if (used_b[b] || used_a[a]) continue;
    used_b[b] = used_a[a] = true;
    before[b].change_type = after[a].change_type = ChangeType::Moved;
    before[b].moved_partner = after[a].object_id;
    after[a].moved_partner = before[b].object_id;
  }
}

// Each detected region becomes its own object (two-image input).
inline std::vector<ChangedObject> regions_as_objects(const std::vector<DetectedRegion>& regions) {
  std::vector<ChangedObject> objects;
  for (const auto& r : regions) {
    ChangedObject o;
    o.side = r.side;
    o.feature = r.feature;
    if (r.cloud) o.cloud = *r.cloud;
    o.members.push_back({r.frame_index, r.frame_id, r.label, r.score});
    o.n_merged = 1;
    o.confidence = r.score;
    objects.push_back(std::move(o));
  }
  return objects;
}

// Consecutive ids: before objects first, then after objects.
inline void assign_object_ids(std::vector<ChangedObject>& before,
                              std::vector<ChangedObject>& after) {
  int next = 0;
  for (auto& o : before) o.object_id = next++;
  for (auto& o : after) o.object_id = next++;
}

struct PixelCentroid {
  double x = 0.0;
  double y = 0.0;
  int count = 0;
};

inline std::vector<PixelCentroid> region_centroids(const RegionMap& regions) {
  std::vector<PixelCentroid> out(regions.regions.size());
  std::vector<double> sx(out.size(), 0.0), sy(out.size(), 0.0);
  for (int y = 0; y < regions.labels.height(); ++y)
    for (int x = 0; x < regions.labels.width(); ++x) {
      const int label = regions.labels(y, x);
      if (label <= 0) continue;
      const int idx = regions.index_of(label);
      sx[idx] += x;
      sy[idx] += y;
      ++out[idx].count;
    }
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].count > 0) out[i] = {sx[i] / out[i].count, sy[i] / out[i].count, out[i].count};
  return out;
}

// One point detection per member region at the region's pixel centroid.
inline DetectionSet emit_detections(const std::vector<ChangedObject>& before,
                                    const std::vector<ChangedObject>& after,
                                    const SequencePair& pair) {
  DetectionSet set;
  set.scene_id = pair.scene_id;
  std::vector<std::vector<PixelCentroid>> centroids[2];
  for (Side side : {Side::Before, Side::After}) {
    for (const auto& f : pair.frames(side))
      centroids[side == Side::After].push_back(region_centroids(f.regions));
  }
  for (const auto* list : {&before, &after}) {
    for (const auto& o : *list) {
      ObjectDetections od;
      od.object_id = o.object_id;
      od.side = o.side;
      od.change_type = o.change_type;
      od.confidence = o.confidence;
      od.partner_id = o.moved_partner;
      const auto& frames = pair.frames(o.side);
      for (const auto& m : o.members) {
        const auto& regions = frames[m.frame_index].regions;
        const int idx = regions.index_of(m.label);
        if (idx < 0) continue;
        const auto& c = centroids[o.side == Side::After][m.frame_index][idx];
        od.detections.push_back({o.side, m.frame_id, c.x, c.y, m.score});
      }
      set.objects.push_back(std::move(od));
    }
  }
  return set;
}

}  // namespace scenediff
