#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "scenediff/assets.hpp"

namespace scenediff {

// Points behind or on the destination image plane are not visible.
inline constexpr double kMinVisibleDepth = 1e-6;
// Depth slack used by the co-visibility occlusion test (normalized units).
inline constexpr double kCovisOcclusionSlack = 0.01;
// Round-off allowance at the lower image edge so an identity reprojection of
// column/row 0 stays in bounds.
inline constexpr double kBoundsTolerance = 1e-9;
// Bounding-box extents below this are treated as degenerate.
inline constexpr double kDegenerateExtent = 1e-9;

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> payload;  // empty, or one scalar per point

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
};

struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
};

struct ReprojectionField {
  Grid<PixelCoord> target_pixel;
  Grid<double> reproj_depth;
  Grid<std::uint8_t> in_bounds;
  int target_width = 0;
  int target_height = 0;

  // Nearest integer (row, col) in the target frame for an in-bounds source pixel.
  std::pair<int, int> nearest(int y, int x) const {
    const auto& t = target_pixel(y, x);
    return {std::clamp(static_cast<int>(std::floor(t.y + 0.5)), 0, target_height - 1),
            std::clamp(static_cast<int>(std::floor(t.x + 0.5)), 0, target_width - 1)};
  }
};

// Similarity transform x -> scale * x + offset applied to world space.
struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return scale * x + offset; }
};

struct NormalizedPair {
  SequencePair pair;
  SimilarityTransform transform;
};

// World-space point of pixel (x, y) at depth d.
inline Eigen::Vector3d unproject_pixel(const FrameAsset& frame, int x, int y, double d) {
  return frame.pose.to_world(d * frame.intrinsics.ray(x, y));
}

inline PointCloud unproject(const FrameAsset& frame) {
  PointCloud cloud;
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (!frame.depth.is_valid(y, x)) continue;
      cloud.points.push_back(unproject_pixel(frame, x, y, frame.depth.values(y, x)));
    }
  }
  return cloud;
}

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d max = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Eigen::Vector3d& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool empty() const { return !(min.x() <= max.x()); }
  Eigen::Vector3d center() const { return 0.5 * (min + max); }
  double max_extent() const { return (max - min).maxCoeff(); }
};

inline Aabb scene_bounds(const SequencePair& pair) {
  Aabb box;
  for (Side side : {Side::Before, Side::After}) {
    for (const auto& frame : pair.frames(side)) {
      for (int y = 0; y < frame.height(); ++y) {
        for (int x = 0; x < frame.width(); ++x) {
          if (frame.depth.is_valid(y, x)) {
            box.extend(unproject_pixel(frame, x, y, frame.depth.values(y, x)));
          }
        }
      }
    }
  }
  return box;
}

inline FrameAsset transform_frame(const FrameAsset& frame, const SimilarityTransform& t) {
  FrameAsset out = frame;
  out.pose.translation = t.apply(frame.pose.translation);
  auto& depth = out.depth.values.storage();
  for (auto& d : depth) d *= t.scale;
  return out;
}

// Isotropically rescales and recentres the union point cloud of both
// sequences into [-1, 1]^3. Rotations are untouched; depths and camera
// centres are transformed by the same similarity.
inline NormalizedPair normalize_scene(const SequencePair& pair) {
  const Aabb box = scene_bounds(pair);
  if (box.empty()) throw Error(ErrorCode::EmptyGeometry, "no valid depth in either sequence");
  const double extent = box.max_extent();
  NormalizedPair out;
  out.transform.scale = extent < kDegenerateExtent ? 1.0 : 2.0 / extent;
  out.transform.offset = -out.transform.scale * box.center();
  out.pair.scene_id = pair.scene_id;
  for (Side side : {Side::Before, Side::After}) {
    for (const auto& f : pair.frames(side)) {
      out.pair.frames(side).push_back(transform_frame(f, out.transform));
    }
  }
  return out;
}

inline ReprojectionField reproject(const FrameAsset& src, const FrameAsset& dst) {
  const int h = src.height(), w = src.width();
  ReprojectionField field{Grid<PixelCoord>(h, w), Grid<double>(h, w, 0.0),
                          Grid<std::uint8_t>(h, w, 0), dst.width(), dst.height()};
  // src camera -> dst camera
  const Eigen::Matrix3d rel_rot = dst.pose.rotation.transpose() * src.pose.rotation;
  const Eigen::Vector3d rel_t =
      dst.pose.rotation.transpose() * (src.pose.translation - dst.pose.translation);
  const double dw = dst.width(), dh = dst.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!src.depth.is_valid(y, x)) continue;
      const double d = src.depth.values(y, x);
      const Eigen::Vector3d p = rel_rot * (d * src.intrinsics.ray(x, y)) + rel_t;
      field.reproj_depth(y, x) = p.z();
      if (p.z() <= kMinVisibleDepth) continue;
      const Eigen::Vector2d t = dst.intrinsics.project(p);
      field.target_pixel(y, x) = {t.x(), t.y()};
      if (t.x() >= -kBoundsTolerance && t.x() < dw && t.y() >= -kBoundsTolerance && t.y() < dh)
        field.in_bounds(y, x) = 1;
    }
  }
  return field;
}

namespace detail {

// Fraction of src's valid pixels that land in dst's view and are not hidden
// behind dst's observed surface.
inline double visible_fraction(const FrameAsset& src, const FrameAsset& dst,
                               double occlusion_slack) {
  const auto field = reproject(src, dst);
  std::size_t valid = 0, visible = 0;
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      if (!src.depth.is_valid(y, x)) continue;
      ++valid;
      if (!field.in_bounds(y, x)) continue;
      const auto [ty, tx] = field.nearest(y, x);
      if (!dst.depth.is_valid(ty, tx)) continue;
      if (field.reproj_depth(y, x) <= dst.depth.values(ty, tx) + occlusion_slack) ++visible;
    }
  }
  return valid == 0 ? 0.0 : static_cast<double>(visible) / static_cast<double>(valid);
}

}  // namespace detail

// Mean of the two directional visible fractions; symmetric in (a, b).
inline double covisibility(const FrameAsset& a, const FrameAsset& b,
                           double occlusion_slack = kCovisOcclusionSlack) {
  const double ab = detail::visible_fraction(a, b, occlusion_slack);
  const double ba = detail::visible_fraction(b, a, occlusion_slack);
  return 0.5 * (ab + ba);
}

using VoxelIndex = std::array<int, 3>;

inline VoxelIndex voxel_of(const Eigen::Vector3d& p, double voxel_size) {
  return {static_cast<int>(std::floor((p.x() + 1.0) / voxel_size)),
          static_cast<int>(std::floor((p.y() + 1.0) / voxel_size)),
          static_cast<int>(std::floor((p.z() + 1.0) / voxel_size))};
}

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex& v) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(v[0]);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(v[1]);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(v[2]);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

// Running sum accumulated in point order so results are reproducible.
struct VoxelAccumulator {
  std::unordered_map<VoxelIndex, std::pair<double, std::size_t>, VoxelIndexHash> cells;
  double voxel_size;

  explicit VoxelAccumulator(double size) : voxel_size(size) {}

  void add(const Eigen::Vector3d& p, double value) {
    auto& cell = cells[voxel_of(p, voxel_size)];
    cell.first += value;
    ++cell.second;
  }
  double mean_at(const Eigen::Vector3d& p) const {
    const auto& cell = cells.at(voxel_of(p, voxel_size));
    return cell.first / static_cast<double>(cell.second);
  }
};

// Mean payload per occupied voxel. Points without a payload count as 0.
inline std::map<VoxelIndex, double> voxelize(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) throw Error(ErrorCode::InvalidConfig, "voxel_size must be positive");
  VoxelAccumulator acc(voxel_size);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    acc.add(cloud.points[i], i < cloud.payload.size() ? cloud.payload[i] : 0.0);
  }
  std::map<VoxelIndex, double> out;
  for (const auto& [key, cell] : acc.cells) {
    out[key] = cell.first / static_cast<double>(cell.second);
  }
  return out;
}

}  // namespace scenediff
