#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "scenediff/geometry.hpp"

namespace scenediff {

struct ScoreWeights {
  double geom = 1.0;
  double feat = 0.5;
  double region = 0.2;
  friend bool operator==(const ScoreWeights&, const ScoreWeights&) = default;
};

// Which directional-mask state counts toward the region exclusion fraction.
enum class ExclusionPredicate { MaskTrue, MaskFalse };

struct ScoringConfig {
  double tau_occ = -0.02;
  ScoreWeights weights;
  double exclude_frac = 0.6;
  ExclusionPredicate exclusion = ExclusionPredicate::MaskTrue;
};

// Cosine similarity; a zero-norm operand yields 1 (no evidence of change).
template <typename A, typename B>
double cosine(const A& a, const B& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(a.size()); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na <= 0.0 || nb <= 0.0) return 1.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

struct GeomScore {
  Grid<double> e_geom;        // 0 where no reprojection is available
  Grid<std::uint8_t> mask;    // directional visibility mask
};

// Signed depth difference D_dst(p') - D*(p') with the asymmetric mask
// (e_geom >= tau_occ) && in_bounds && dst depth valid at p'.
inline GeomScore geom_score(const FrameAsset& src, const FrameAsset& dst,
                            const ReprojectionField& field, double tau_occ = -0.02) {
  const int h = src.height(), w = src.width();
  GeomScore out{Grid<double>(h, w, 0.0), Grid<std::uint8_t>(h, w, 0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!field.in_bounds(y, x)) continue;
      const auto [ty, tx] = field.nearest(y, x);
      if (!dst.depth.is_valid(ty, tx)) continue;
      const double diff = dst.depth.values(ty, tx) - field.reproj_depth(y, x);
      out.e_geom(y, x) = diff;
      out.mask(y, x) = diff >= tau_occ ? 1 : 0;
    }
  }
  return out;
}

inline Grid<double> feat_score(const FrameAsset& src, const FrameAsset& dst,
                               const ReprojectionField& field, const Grid<std::uint8_t>& mask) {
  const int h = src.height(), w = src.width();
  Grid<double> e_feat(h, w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      const auto fs = src.features.lookup(x, y, w, h);
      const auto& t = field.target_pixel(y, x);
      const auto fd = dst.features.lookup(t.x, t.y, dst.width(), dst.height());
      e_feat(y, x) = 1.0 - cosine(fs, fd);
    }
  }
  return e_feat;
}

// Mean-pooled feature per region (ascending label order), over pixels with
// valid depth; regions without any valid pixel fall back to all pixels.
struct RegionFeatures {
  std::vector<Eigen::VectorXd> mean;
  std::vector<int> valid_pixels;
};

inline RegionFeatures region_features(const FrameAsset& frame) {
  const auto& regions = frame.regions;
  const int n = static_cast<int>(regions.regions.size());
  const int c = frame.features.channels();
  RegionFeatures out;
  out.mean.assign(n, Eigen::VectorXd::Zero(c));
  out.valid_pixels.assign(n, 0);
  std::vector<Eigen::VectorXd> all(n, Eigen::VectorXd::Zero(c));
  std::vector<int> all_count(n, 0);
  const int h = frame.height(), w = frame.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int label = regions.labels(y, x);
      if (label <= 0) continue;
      const int idx = regions.index_of(label);
      const auto f = frame.features.lookup(x, y, w, h);
      const Eigen::Map<const Eigen::VectorXf> fv(f.data(), c);
      all[idx] += fv.cast<double>();
      ++all_count[idx];
      if (frame.depth.is_valid(y, x)) {
        out.mean[idx] += fv.cast<double>();
        ++out.valid_pixels[idx];
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (out.valid_pixels[i] > 0) {
      out.mean[i] /= out.valid_pixels[i];
    } else if (all_count[i] > 0) {
      out.mean[i] = all[i] / all_count[i];
    }
  }
  return out;
}

struct RegionMatch {
  std::vector<double> e_region;        // per src region; 0 where excluded
  std::vector<std::uint8_t> excluded;  // per src region
  std::vector<int> best_match;         // dst label of sigma(r), or 0
  bool no_dst_regions = false;
};

inline RegionMatch region_match_score(const FrameAsset& src, const FrameAsset& dst,
                                      const Grid<std::uint8_t>& mask,
                                      const RegionFeatures& src_feat,
                                      const RegionFeatures& dst_feat,
                                      double exclude_frac = 0.6,
                                      ExclusionPredicate predicate = ExclusionPredicate::MaskTrue) {
  const auto& regions = src.regions;
  const std::size_t n = regions.regions.size();
  RegionMatch out;
  out.e_region.assign(n, 0.0);
  out.excluded.assign(n, 0);
  out.best_match.assign(n, 0);
  if (dst.regions.regions.empty()) {
    out.no_dst_regions = true;
    std::fill(out.excluded.begin(), out.excluded.end(), 1);
    return out;
  }
  std::vector<int> counted(n, 0), total(n, 0);
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      const int label = regions.labels(y, x);
      if (label <= 0 || !src.depth.is_valid(y, x)) continue;
      const int idx = regions.index_of(label);
      ++total[idx];
      const bool m = mask(y, x) != 0;
      if (predicate == ExclusionPredicate::MaskTrue ? m : !m) ++counted[idx];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (total[i] > 0 &&
        static_cast<double>(counted[i]) > exclude_frac * static_cast<double>(total[i])) {
      out.excluded[i] = 1;
      continue;
    }
    double best = -2.0;
    for (std::size_t s = 0; s < dst.regions.regions.size(); ++s) {
      const double c = cosine(src_feat.mean[i], dst_feat.mean[s]);
      if (c > best) {
        best = c;
        out.best_match[i] = dst.regions.regions[s].label;
      }
    }
    out.e_region[i] = 1.0 - best;
  }
  return out;
}

inline RegionMatch region_match_score(const FrameAsset& src, const FrameAsset& dst,
                                      const Grid<std::uint8_t>& mask, double exclude_frac = 0.6,
                                      ExclusionPredicate predicate = ExclusionPredicate::MaskTrue) {
  return region_match_score(src, dst, mask, region_features(src), region_features(dst),
                            exclude_frac, predicate);
}

struct PairScores {
  Grid<double> e_geom;
  Grid<std::uint8_t> mask;
  Grid<double> e_feat;
  RegionMatch region;
};

struct RegionScoreMap {
  std::vector<double> delta;      // per region, ascending label order
  std::vector<int> pixel_count;   // valid pixels pooled per region
};

// Region-pooled weighted fusion of the three cues over valid source pixels.
inline RegionScoreMap fuse(const PairScores& scores, const FrameAsset& src,
                           const ScoreWeights& weights = {}) {
  const auto& regions = src.regions;
  const std::size_t n = regions.regions.size();
  std::vector<double> geom(n, 0.0), feat(n, 0.0);
  RegionScoreMap out;
  out.delta.assign(n, 0.0);
  out.pixel_count.assign(n, 0);
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      const int label = regions.labels(y, x);
      if (label <= 0 || !src.depth.is_valid(y, x)) continue;
      const int idx = regions.index_of(label);
      geom[idx] += scores.e_geom(y, x);
      feat[idx] += scores.e_feat(y, x);
      ++out.pixel_count[idx];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (out.pixel_count[i] == 0) continue;
    const double count = out.pixel_count[i];
    const double region_term = scores.region.excluded[i] ? 0.0 : scores.region.e_region[i];
    out.delta[i] = weights.geom * (geom[i] / count) + weights.feat * (feat[i] / count) +
                   weights.region * region_term;
  }
  return out;
}

inline PairScores score_pair(const FrameAsset& src, const FrameAsset& dst,
                             const RegionFeatures& src_feat, const RegionFeatures& dst_feat,
                             const ScoringConfig& config = {}) {
  const auto field = reproject(src, dst);
  auto geom = geom_score(src, dst, field, config.tau_occ);
  PairScores out;
  out.e_feat = feat_score(src, dst, field, geom.mask);
  out.region = region_match_score(src, dst, geom.mask, src_feat, dst_feat, config.exclude_frac,
                                  config.exclusion);
  out.e_geom = std::move(geom.e_geom);
  out.mask = std::move(geom.mask);
  return out;
}

inline PairScores score_pair(const FrameAsset& src, const FrameAsset& dst,
                             const ScoringConfig& config = {}) {
  return score_pair(src, dst, region_features(src), region_features(dst), config);
}

}  // namespace scenediff
