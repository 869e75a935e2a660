#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "scenediff/assets.hpp"

namespace scenediff::testutil {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("scenediff_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline Intrinsics make_intrinsics(int w, int h, double f) {
  Intrinsics k;
  k.fx = k.fy = f;
  k.cx = (w - 1) / 2.0;
  k.cy = (h - 1) / 2.0;
  k.width = w;
  k.height = h;
  return k;
}

// Camera at `eye` looking down +Z (identity rotation) at a fronto-parallel
// plane of constant depth; one region label everywhere, constant feature.
inline FrameAsset plane_frame(int w, int h, double f, double depth, int feat_c = 4,
                              int feat_stride = 4) {
  FrameAsset fr;
  fr.intrinsics = make_intrinsics(w, h, f);
  fr.depth.values = Grid<double>(h, w, depth);
  fr.depth.valid = Grid<std::uint8_t>(h, w, 1);
  fr.features.values = VectorGrid<float>(h / feat_stride, w / feat_stride, feat_c, 0.0f);
  for (int y = 0; y < fr.features.height(); ++y)
    for (int x = 0; x < fr.features.width(); ++x) fr.features.values.at(y, x)[0] = 1.0f;
  fr.regions = RegionMap::from_labels(Grid<std::int32_t>(h, w, 1));
  return fr;
}

// Random but valid frame: random depths, some invalid pixels, random
// features and a few rectangular regions.
inline FrameAsset random_frame(std::mt19937_64& rng, int w = 12, int h = 9, int feat_c = 3) {
  std::uniform_real_distribution<double> u(0.5, 3.0);
  std::uniform_real_distribution<float> fu(-1.0f, 1.0f);
  FrameAsset fr;
  fr.frame_id = static_cast<int>(rng() % 100);
  fr.intrinsics = make_intrinsics(w, h, 10.0 + u(rng));
  fr.depth.values = Grid<double>(h, w);
  fr.depth.valid = Grid<std::uint8_t>(h, w);
  Grid<std::int32_t> labels(h, w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      fr.depth.values(y, x) = static_cast<float>(u(rng));  // float-exact for disk round trips
      fr.depth.valid(y, x) = (rng() % 7) != 0;
      labels(y, x) = static_cast<std::int32_t>((x / 4) + 3 * (y / 3));
    }
  fr.regions = RegionMap::from_labels(std::move(labels));
  fr.features.values = VectorGrid<float>(3, 4, feat_c);
  for (auto& v : fr.features.values.storage()) v = fu(rng);
  const double a = u(rng);
  fr.pose.rotation << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  fr.pose.translation = {u(rng), -u(rng), 0.25 * u(rng)};
  return fr;
}

}  // namespace scenediff::testutil
