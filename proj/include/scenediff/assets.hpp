#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "scenediff/error.hpp"
#include "scenediff/grid.hpp"

namespace scenediff {

namespace fs = std::filesystem;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  // Ray direction (z = 1) through pixel centre (x, y).
  Eigen::Vector3d ray(double x, double y) const {
    return {(x - cx) / fx, (y - cy) / fy, 1.0};
  }

  Eigen::Vector2d project(const Eigen::Vector3d& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || width <= 0 || height <= 0 ||
        !(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
      throw Error(ErrorCode::InvalidIntrinsics,
                  "fx,fy must be positive and the principal point inside the image");
    }
  }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

// Camera-to-world rigid transform.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d to_world(const Eigen::Vector3d& p_cam) const {
    return rotation * p_cam + translation;
  }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
    return rotation.transpose() * (p_world - translation);
  }

  void validate(double tol = 1e-6) const {
    if (!rotation.allFinite() || !translation.allFinite()) {
      throw Error(ErrorCode::InvalidPose, "non-finite pose entries");
    }
    const double ortho =
        (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > tol) {
      throw Error(ErrorCode::InvalidPose, "rotation is not orthonormal");
    }
    if (std::abs(rotation.determinant() - 1.0) > tol) {
      throw Error(ErrorCode::InvalidPose, "rotation determinant is not +1");
    }
  }

  friend bool operator==(const Pose& a, const Pose& b) {
    return a.rotation == b.rotation && a.translation == b.translation;
  }
};

// Stored as float32 on disk; held in double so normalization is exact.
struct DepthMap {
  Grid<double> values;
  Grid<std::uint8_t> valid;

  int height() const noexcept { return values.height(); }
  int width() const noexcept { return values.width(); }
  bool is_valid(int y, int x) const { return valid(y, x) != 0; }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

struct FeatureMap {
  VectorGrid<float> values;

  int height() const noexcept { return values.height(); }
  int width() const noexcept { return values.width(); }
  int channels() const noexcept { return values.channels(); }

  // Nearest feature cell for a continuous pixel coordinate of an image of
  // the given size; pixel centres sit on integer coordinates.
  std::span<const float> lookup(double x, double y, int image_width,
                                int image_height) const {
    const int col = std::clamp(
        static_cast<int>(std::floor((x + 0.5) * width() / image_width)), 0, width() - 1);
    const int row = std::clamp(
        static_cast<int>(std::floor((y + 0.5) * height() / image_height)), 0, height() - 1);
    return values.at(row, col);
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

struct Region {
  std::int32_t label = 0;
  int pixel_count = 0;
  friend bool operator==(const Region&, const Region&) = default;
};

// Label 0 is background; labels >= 1 are regions. Disjoint by construction.
struct RegionMap {
  Grid<std::int32_t> labels;
  std::vector<Region> regions;  // ascending label order

  static RegionMap from_labels(Grid<std::int32_t> labels) {
    RegionMap map;
    std::map<std::int32_t, int> counts;
    for (auto label : labels.values()) {
      if (label > 0) ++counts[label];
    }
    for (const auto& [label, count] : counts) map.regions.push_back({label, count});
    map.labels = std::move(labels);
    return map;
  }

  // Index into `regions` for a label, or -1.
  int index_of(std::int32_t label) const {
    auto it = std::lower_bound(regions.begin(), regions.end(), label,
                               [](const Region& r, std::int32_t l) { return r.label < l; });
    if (it == regions.end() || it->label != label) return -1;
    return static_cast<int>(it - regions.begin());
  }

  friend bool operator==(const RegionMap&, const RegionMap&) = default;
};

struct FrameAsset {
  int frame_id = 0;
  Intrinsics intrinsics;
  Pose pose;
  DepthMap depth;
  FeatureMap features;
  RegionMap regions;

  int width() const noexcept { return intrinsics.width; }
  int height() const noexcept { return intrinsics.height; }

  void validate() const {
    intrinsics.validate();
    pose.validate();
    const int h = intrinsics.height, w = intrinsics.width;
    if (depth.values.height() != h || depth.values.width() != w ||
        depth.valid.height() != h || depth.valid.width() != w) {
      throw Error(ErrorCode::ShapeMismatch, "depth shape disagrees with intrinsics");
    }
    if (regions.labels.height() != h || regions.labels.width() != w) {
      throw Error(ErrorCode::ShapeMismatch, "region map shape disagrees with intrinsics");
    }
    for (std::size_t i = 0; i < depth.values.size(); ++i) {
      if (depth.valid[i] && !(std::isfinite(depth.values[i]) && depth.values[i] >= 0.0)) {
        throw Error(ErrorCode::MalformedInput, "valid depth must be finite and non-negative");
      }
    }
    for (float v : features.values.storage()) {
      if (!std::isfinite(v)) throw Error(ErrorCode::MalformedInput, "non-finite feature");
    }
    if (features.height() <= 0 || features.width() <= 0 || features.channels() <= 0) {
      throw Error(ErrorCode::ShapeMismatch, "empty feature grid");
    }
  }

  friend bool operator==(const FrameAsset& a, const FrameAsset& b) {
    return a.frame_id == b.frame_id && a.intrinsics == b.intrinsics && a.pose == b.pose &&
           a.depth == b.depth && a.features == b.features && a.regions == b.regions;
  }
};

enum class Side { Before, After };

constexpr const char* to_string(Side side) { return side == Side::Before ? "before" : "after"; }

struct SequencePair {
  std::string scene_id;
  std::vector<FrameAsset> before;
  std::vector<FrameAsset> after;

  const std::vector<FrameAsset>& frames(Side side) const {
    return side == Side::Before ? before : after;
  }
  std::vector<FrameAsset>& frames(Side side) { return side == Side::Before ? before : after; }

  int feature_dim() const {
    return before.empty() ? 0 : before.front().features.channels();
  }

  void validate() const {
    if (before.empty() || after.empty()) {
      throw Error(ErrorCode::MalformedInput, "both sequences need at least one frame");
    }
    const int c = feature_dim();
    for (const auto* seq : {&before, &after}) {
      for (const auto& f : *seq) {
        f.validate();
        if (f.features.channels() != c) {
          throw Error(ErrorCode::FeatureDimMismatch,
                      "frame " + std::to_string(f.frame_id) + " has feature dim " +
                          std::to_string(f.features.channels()) + ", expected " +
                          std::to_string(c));
        }
      }
    }
  }

  friend bool operator==(const SequencePair&, const SequencePair&) = default;
};

// ---------------------------------------------------------------------------
// On-disk layout:
//   root/manifest.json                 {scene_id, n_before, n_after, feat_c}
//   root/{before,after}/NNNN/meta.json  frame metadata
//   root/{before,after}/NNNN/depth.f32  H*W float32 LE
//   root/{before,after}/NNNN/valid.u8   H*W bytes (0/1)
//   root/{before,after}/NNNN/feat.f32   feat_h*feat_w*feat_c float32 LE
//   root/{before,after}/NNNN/regions.i32 H*W int32 LE
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T byteswap_if_big(T value) {
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

inline std::string rel(const fs::path& root, const fs::path& p) {
  return fs::relative(p, root).generic_string();
}

template <typename T>
std::vector<T> read_array(const fs::path& root, const fs::path& path, std::size_t count) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, rel(root, path));
  std::error_code ec;
  const auto bytes = fs::file_size(path, ec);
  if (ec) throw Error(ErrorCode::IoError, rel(root, path));
  if (bytes != count * sizeof(T)) {
    throw Error(ErrorCode::ShapeMismatch,
                rel(root, path) + " holds " + std::to_string(bytes / sizeof(T)) +
                    " entries, manifest declares " + std::to_string(count));
  }
  std::vector<T> out(count);
  std::ifstream in(path, std::ios::binary);
  if (!in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes))) {
    throw Error(ErrorCode::IoError, "failed to read " + rel(root, path));
  }
  for (auto& v : out) v = byteswap_if_big(v);
  return out;
}

template <typename T>
void write_array(const fs::path& path, std::span<const T> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size_bytes()));
  } else {
    for (T v : data) {
      v = byteswap_if_big(v);
      out.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "failed to write " + path.string());
}

inline nlohmann::json read_json(const fs::path& root, const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, rel(root, path));
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, rel(root, path) + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "failed to write " + path.string());
}

inline std::string frame_dir_name(std::size_t index) {
  std::string s = std::to_string(index);
  return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

inline FrameAsset load_frame(const fs::path& root, const fs::path& dir) {
  const auto meta = read_json(root, dir / "meta.json");
  FrameAsset f;
  try {
    f.frame_id = meta.at("frame_id").get<int>();
    f.intrinsics.width = meta.at("width").get<int>();
    f.intrinsics.height = meta.at("height").get<int>();
    f.intrinsics.fx = meta.at("fx").get<double>();
    f.intrinsics.fy = meta.at("fy").get<double>();
    f.intrinsics.cx = meta.at("cx").get<double>();
    f.intrinsics.cy = meta.at("cy").get<double>();
    const auto rot = meta.at("rotation").get<std::vector<double>>();
    const auto trans = meta.at("translation").get<std::vector<double>>();
    if (rot.size() != 9 || trans.size() != 3) {
      throw Error(ErrorCode::MalformedInput, rel(root, dir / "meta.json") + ": pose arity");
    }
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f.pose.rotation(r, c) = rot[r * 3 + c];
    f.pose.translation = {trans[0], trans[1], trans[2]};
    const int fh = meta.at("feat_h").get<int>();
    const int fw = meta.at("feat_w").get<int>();
    const int fc = meta.at("feat_c").get<int>();
    const int h = f.intrinsics.height, w = f.intrinsics.width;
    if (h <= 0 || w <= 0 || fh <= 0 || fw <= 0 || fc <= 0) {
      throw Error(ErrorCode::ShapeMismatch, rel(root, dir / "meta.json") + ": non-positive shape");
    }
    const auto n = static_cast<std::size_t>(h) * w;
    const auto depth = read_array<float>(root, dir / "depth.f32", n);
    f.depth.values = Grid<double>(h, w, std::vector<double>(depth.begin(), depth.end()));
    f.depth.valid = Grid<std::uint8_t>(h, w, read_array<std::uint8_t>(root, dir / "valid.u8", n));
    f.features.values = VectorGrid<float>(
        fh, fw, fc,
        read_array<float>(root, dir / "feat.f32", static_cast<std::size_t>(fh) * fw * fc));
    f.regions = RegionMap::from_labels(
        Grid<std::int32_t>(h, w, read_array<std::int32_t>(root, dir / "regions.i32", n)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, rel(root, dir / "meta.json") + ": " + e.what());
  }
  f.validate();
  return f;
}

inline void save_frame(const FrameAsset& f, const fs::path& dir) {
  nlohmann::ordered_json meta;
  meta["frame_id"] = f.frame_id;
  meta["width"] = f.intrinsics.width;
  meta["height"] = f.intrinsics.height;
  meta["feat_h"] = f.features.height();
  meta["feat_w"] = f.features.width();
  meta["feat_c"] = f.features.channels();
  meta["fx"] = f.intrinsics.fx;
  meta["fy"] = f.intrinsics.fy;
  meta["cx"] = f.intrinsics.cx;
  meta["cy"] = f.intrinsics.cy;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[r * 3 + c] = f.pose.rotation(r, c);
  meta["rotation"] = rot;
  meta["translation"] = {f.pose.translation.x(), f.pose.translation.y(), f.pose.translation.z()};
  write_json(dir / "meta.json", meta);
  const auto& d = f.depth.values.storage();
  write_array<float>(dir / "depth.f32", std::vector<float>(d.begin(), d.end()));
  write_array<std::uint8_t>(dir / "valid.u8", f.depth.valid.values());
  write_array<float>(dir / "feat.f32", f.features.values.storage());
  write_array<std::int32_t>(dir / "regions.i32", f.regions.labels.values());
}

inline void create_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) {
    throw Error(ErrorCode::IoError, "cannot create directory " + p.string());
  }
}

}  // namespace detail

// Loads every NNNN/ frame directory of one sequence, in index order. When
// `expected` is non-negative, exactly that many frames must be present.
inline std::vector<FrameAsset> load_sequence(const fs::path& root, const fs::path& dir,
                                             int expected = -1) {
  std::vector<FrameAsset> frames;
  if (expected >= 0) {
    for (int i = 0; i < expected; ++i) {
      const auto sub = dir / detail::frame_dir_name(i);
      if (!fs::is_directory(sub)) throw Error(ErrorCode::MissingFile, detail::rel(root, sub));
      frames.push_back(detail::load_frame(root, sub));
    }
    return frames;
  }
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, dir.string());
  std::vector<fs::path> subs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) subs.push_back(entry.path());
  }
  std::sort(subs.begin(), subs.end());
  for (const auto& sub : subs) frames.push_back(detail::load_frame(root, sub));
  return frames;
}

inline SequencePair load_sequence_pair(const fs::path& root) {
  const auto manifest = detail::read_json(root, root / "manifest.json");
  SequencePair pair;
  int n_before = 0, n_after = 0, feat_c = 0;
  try {
    pair.scene_id = manifest.at("scene_id").get<std::string>();
    n_before = manifest.at("n_before").get<int>();
    n_after = manifest.at("n_after").get<int>();
    feat_c = manifest.at("feat_c").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedInput, std::string("manifest.json: ") + e.what());
  }
  if (n_before < 1 || n_after < 1) {
    throw Error(ErrorCode::MalformedInput, "manifest.json: n_before and n_after must be >= 1");
  }
  pair.before = load_sequence(root, root / "before", n_before);
  pair.after = load_sequence(root, root / "after", n_after);
  for (const auto* seq : {&pair.before, &pair.after}) {
    for (const auto& f : *seq) {
      if (f.features.channels() != feat_c) {
        throw Error(ErrorCode::FeatureDimMismatch,
                    "frame " + std::to_string(f.frame_id) + " has feature dim " +
                        std::to_string(f.features.channels()) + ", manifest declares " +
                        std::to_string(feat_c));
      }
    }
  }
  pair.validate();
  return pair;
}

inline void save_sequence_pair(const SequencePair& pair, const fs::path& root) {
  pair.validate();
  detail::create_dirs(root);
  nlohmann::ordered_json manifest;
  manifest["scene_id"] = pair.scene_id;
  manifest["n_before"] = pair.before.size();
  manifest["n_after"] = pair.after.size();
  manifest["feat_c"] = pair.feature_dim();
  detail::write_json(root / "manifest.json", manifest);
  for (Side side : {Side::Before, Side::After}) {
    const auto& frames = pair.frames(side);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto dir = root / to_string(side) / detail::frame_dir_name(i);
      detail::create_dirs(dir);
      detail::save_frame(frames[i], dir);
    }
  }
}

}  // namespace scenediff
