#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <png.h>

#include "scenediff/assets.hpp"
#include "scenediff/detections.hpp"
#include "scenediff/error.hpp"
#include "scenediff/geometry.hpp"
#include "scenediff/grid.hpp"

namespace scenediff {

using Rgb = std::array<std::uint8_t, 3>;

// red = Removed, green = Added, blue = Moved
inline Rgb type_color(ChangeType t) {
  switch (t) {
    case ChangeType::Removed: return {230, 40, 40};
    case ChangeType::Added: return {40, 200, 60};
    case ChangeType::Moved: return {50, 90, 240};
  }
  return {255, 255, 255};
}

struct RgbImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;  // row-major RGB

  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  void set(int y, int x, const Rgb& c) {
    if (y < 0 || x < 0 || y >= height || x >= width) return;
    auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = c[0], p[1] = c[1], p[2] = c[2];
  }
  Rgb get(int y, int x) const {
    const auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
    return {p[0], p[1], p[2]};
  }
};

inline void write_png(const RgbImage& img, const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorCode::IoError, "png encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(&img.data[static_cast<std::size_t>(y) * img.width * 3]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// Region label -> (type, confidence) of the detection whose point falls in it.
struct RegionHighlight {
  ChangeType type;
  double confidence;
};

inline std::map<std::int32_t, RegionHighlight> highlighted_regions(const FrameAsset& f, Side side,
                                                                   const DetectionSet& dets) {
  std::map<std::int32_t, RegionHighlight> out;
  for (const auto& o : dets.objects) {
    for (const auto& d : o.detections) {
      if (d.video != side || d.frame_id != f.frame_id) continue;
      const int x = static_cast<int>(std::lround(d.x)), y = static_cast<int>(std::lround(d.y));
      if (!f.regions.labels.contains(y, x)) continue;
      const auto label = f.regions.labels(y, x);
      if (label == 0) continue;
      auto it = out.find(label);
      if (it == out.end() || it->second.confidence < o.confidence)
        out[label] = {o.change_type, o.confidence};
    }
  }
  return out;
}

// Shaded depth, detected regions outlined in their type color, and a 5x5
// marker at every detection point.
inline RgbImage render_overlay(const FrameAsset& f, Side side, const DetectionSet& dets) {
  const int h = f.height(), w = f.width();
  RgbImage img(w, h);
  double lo = std::numeric_limits<double>::max(), hi = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (f.depth.is_valid(y, x)) {
        lo = std::min(lo, f.depth.values(y, x));
        hi = std::max(hi, f.depth.values(y, x));
      }
  const double span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!f.depth.is_valid(y, x)) continue;
      const auto g = static_cast<std::uint8_t>(230.0 - 170.0 * (f.depth.values(y, x) - lo) / span);
      img.set(y, x, {g, g, g});
    }

  const auto lit = highlighted_regions(f, side, dets);
  const auto& labels = f.regions.labels;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto it = lit.find(labels(y, x));
      if (it == lit.end()) continue;
      const bool edge = y == 0 || x == 0 || y == h - 1 || x == w - 1 ||
                        labels(y - 1, x) != labels(y, x) || labels(y + 1, x) != labels(y, x) ||
                        labels(y, x - 1) != labels(y, x) || labels(y, x + 1) != labels(y, x);
      if (edge) img.set(y, x, type_color(it->second.type));
    }

  for (const auto& o : dets.objects)
    for (const auto& d : o.detections) {
      if (d.video != side || d.frame_id != f.frame_id) continue;
      const int cx = static_cast<int>(std::lround(d.x)), cy = static_cast<int>(std::lround(d.y));
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) img.set(cy + dy, cx + dx, type_color(o.change_type));
    }
  return img;
}

// ASCII PLY with x y z float and red green blue uchar per vertex. Points of
// detected regions blend from grey toward their type color by confidence;
// everything else stays grey. Every `stride`-th pixel is sampled.
inline void write_ply(const SequencePair& pair, const DetectionSet& dets,
                      const std::filesystem::path& path, int stride = 4) {
  struct Vertex {
    Eigen::Vector3d p;
    Rgb c;
  };
  std::vector<Vertex> verts;
  for (Side side : {Side::Before, Side::After}) {
    for (const auto& f : pair.frames(side)) {
      const auto lit = highlighted_regions(f, side, dets);
      for (int y = 0; y < f.height(); y += stride)
        for (int x = 0; x < f.width(); x += stride) {
          if (!f.depth.is_valid(y, x)) continue;
          Rgb c{128, 128, 128};
          const auto it = lit.find(f.regions.labels(y, x));
          if (it != lit.end()) {
            const auto tc = type_color(it->second.type);
            const double a = std::clamp(it->second.confidence, 0.0, 1.0);
            for (int i = 0; i < 3; ++i)
              c[i] = static_cast<std::uint8_t>(std::lround((1 - a) * 128 + a * tc[i]));
          }
          verts.push_back({unproject_pixel(f, x, y, f.depth.values(y, x)), c});
        }
    }
  }
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  os << "ply\nformat ascii 1.0\nelement vertex " << verts.size()
     << "\nproperty float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  char buf[96];
  for (const auto& v : verts) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %d %d %d\n", v.p.x(), v.p.y(), v.p.z(), v.c[0],
                  v.c[1], v.c[2]);
    os << buf;
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace scenediff
