#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scenediff/association.hpp"
#include "scenediff/detections.hpp"
#include "scenediff/geometry.hpp"
#include "scenediff/pairing.hpp"
#include "scenediff/parallel.hpp"
#include "scenediff/scoring.hpp"
#include "scenediff/thresholding.hpp"

namespace scenediff {

enum class ThresholdMode { Kapur, Fixed };

struct PipelineConfig {
  double tau_occ = -0.02;
  ScoreWeights weights;
  double covis_threshold = 0.5;
  double exclude_frac = 0.6;
  ExclusionPredicate exclusion = ExclusionPredicate::MaskTrue;
  double sigma_geo = 0.02;
  double sigma_merge = 1.4;
  double tau_sim = 0.7;
  double voxel_size = 0.02;
  ThresholdMode threshold_mode = ThresholdMode::Kapur;
  double fixed_threshold = 0.2;
  int kapur_bins = 256;
  int workers = 1;

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
    for (double v : {tau_occ, weights.geom, weights.feat, weights.region, covis_threshold,
                     exclude_frac, sigma_geo, sigma_merge, tau_sim, voxel_size, fixed_threshold})
      if (!finite(v)) fail("thresholds must be finite");
    if (covis_threshold < 0.0 || covis_threshold > 1.0) fail("covis threshold must lie in [0,1]");
    if (exclude_frac < 0.0 || exclude_frac > 1.0) fail("exclude fraction must lie in [0,1]");
    if (!(voxel_size > 0.0)) fail("voxel size must be positive");
    if (!(sigma_geo > 0.0)) fail("sigma_geo must be positive");
    if (kapur_bins < 2) fail("kapur bins must be >= 2");
    if (workers < 1) fail("workers must be >= 1");
  }

  ScoringConfig scoring() const { return {tau_occ, weights, exclude_frac, exclusion}; }
};

inline std::string threshold_string(const PipelineConfig& c) {
  if (c.threshold_mode == ThresholdMode::Kapur) return "kapur";
  nlohmann::json v = c.fixed_threshold;
  return "fixed:" + v.dump();
}

// Result-affecting parameters only: the worker count is not part of the
// snapshot so outputs are identical for any degree of parallelism.
inline nlohmann::ordered_json config_snapshot(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["tau_occ"] = c.tau_occ;
  j["weights"] = {c.weights.geom, c.weights.feat, c.weights.region};
  j["covis"] = c.covis_threshold;
  j["exclude_frac"] = c.exclude_frac;
  j["exclude_predicate"] = c.exclusion == ExclusionPredicate::MaskTrue ? "mask_true" : "mask_false";
  j["sigma_geo"] = c.sigma_geo;
  j["sigma_merge"] = c.sigma_merge;
  j["tau_sim"] = c.tau_sim;
  j["voxel"] = c.voxel_size;
  j["threshold"] = threshold_string(c);
  j["kapur_bins"] = c.kapur_bins;
  return j;
}

struct PipelineResult {
  DetectionSet detections;
  double threshold = 0.0;
  bool threshold_degenerate = false;
  bool two_image = false;
  FramePairSet pairs;
  SimilarityTransform normalization;
  // Final per-region scores per side / frame, after voxel consistency.
  std::vector<FrameChangeScores> before_scores;
  std::vector<FrameChangeScores> after_scores;
  std::vector<ChangedObject> before_objects;
  std::vector<ChangedObject> after_objects;
};

// normalize -> pair -> score both directions -> average -> voxel consistency
// -> threshold -> associate -> classify -> emit. A 1x1 input skips the 3D
// aggregation and association stages.
inline PipelineResult run_pipeline(const SequencePair& input, const PipelineConfig& config = {}) {
  config.validate();
  input.validate();
  PipelineResult result;
  auto normalized = normalize_scene(input);
  const SequencePair& pair = normalized.pair;
  result.normalization = normalized.transform;
  result.two_image = pair.before.size() == 1 && pair.after.size() == 1;
  const int workers = config.workers;

  result.pairs = select_pairs(pair, config.covis_threshold, workers);

  std::vector<RegionFeatures> features[2];
  for (Side side : {Side::Before, Side::After}) {
    const auto& frames = pair.frames(side);
    auto& out = features[side == Side::After];
    out.resize(frames.size());
    parallel_for(frames.size(), workers, [&](std::size_t i) { out[i] = region_features(frames[i]); });
  }

  std::vector<DirectedRegionScores> directed(2 * result.pairs.pairs.size());
  const auto scoring = config.scoring();
  parallel_for(directed.size(), workers, [&](std::size_t k) {
    const auto& fp = result.pairs.pairs[k / 2];
    const bool from_before = k % 2 == 0;
    const int src = from_before ? fp.before : fp.after;
    const int dst = from_before ? fp.after : fp.before;
    const Side side = from_before ? Side::Before : Side::After;
    const Side other = from_before ? Side::After : Side::Before;
    const auto& sf = pair.frames(side)[src];
    const auto& df = pair.frames(other)[dst];
    const auto scores = score_pair(sf, df, features[from_before ? 0 : 1][src],
                                   features[from_before ? 1 : 0][dst], scoring);
    directed[k] = {side, src, dst, fuse(scores, sf, config.weights)};
  });

  std::vector<FrameChangeScores> side_scores[2];
  parallel_for(2, workers, [&](std::size_t s) {
    const Side side = s == 0 ? Side::Before : Side::After;
    const auto& frames = pair.frames(side);
    auto& scores = side_scores[s];
    scores = average_frame_scores(frames, side, directed);
    for (std::size_t n = 0; n < frames.size(); ++n) scores[n].clouds = region_clouds(frames[n]);
    if (!result.two_image) voxel_consistency(scores, config.voxel_size);
  });

  if (config.threshold_mode == ThresholdMode::Fixed) {
    result.threshold = config.fixed_threshold;
  } else {
    std::vector<double> all;
    for (const auto& side : side_scores)
      for (const auto& frame : side)
        for (std::size_t r = 0; r < frame.score.size(); ++r)
          if (!frame.clouds[r].empty()) all.push_back(frame.score[r]);
    if (all.empty()) {
      result.threshold = config.fixed_threshold;
    } else {
      const auto k = kapur_threshold(all, config.kapur_bins);
      result.threshold = k.threshold;
      result.threshold_degenerate = k.degenerate;
    }
  }

  std::vector<ChangedObject> objects[2];
  parallel_for(2, workers, [&](std::size_t s) {
    const Side side = s == 0 ? Side::Before : Side::After;
    const auto regions =
        detect_regions(pair.frames(side), side, side_scores[s], features[s], result.threshold);
    objects[s] = result.two_image
                     ? regions_as_objects(regions)
                     : associate(regions, {config.sigma_geo, config.sigma_merge});
  });
  assign_object_ids(objects[0], objects[1]);
  classify(objects[0], objects[1], config.tau_sim);

  result.detections = emit_detections(objects[0], objects[1], pair);
  result.before_scores = std::move(side_scores[0]);
  result.after_scores = std::move(side_scores[1]);
  result.before_objects = std::move(objects[0]);
  result.after_objects = std::move(objects[1]);
  return result;
}

inline nlohmann::ordered_json detection_output_json(const PipelineResult& r,
                                                    const PipelineConfig& c) {
  auto j = to_json(r.detections);
  j["threshold"] = r.threshold;
  j["config"] = config_snapshot(c);
  return j;
}

// --- config file / flag parsing helpers ---------------------------------

inline ThresholdMode parse_threshold(const std::string& s, double& fixed) {
  if (s == "kapur") return ThresholdMode::Kapur;
  if (s.rfind("fixed:", 0) == 0) {
    try {
      std::size_t used = 0;
      fixed = std::stod(s.substr(6), &used);
      if (used != s.size() - 6) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad threshold '" + s + "'");
    }
    return ThresholdMode::Fixed;
  }
  throw Error(ErrorCode::InvalidConfig, "threshold must be 'kapur' or 'fixed:X', got '" + s + "'");
}

// Overlays the keys present in `j` (same names as the snapshot) onto `c`.
inline void apply_config_json(const nlohmann::json& j, PipelineConfig& c) {
  try {
    c.tau_occ = j.value("tau_occ", c.tau_occ);
    if (j.contains("weights")) {
      const auto w = j["weights"].get<std::vector<double>>();
      if (w.size() != 3) throw Error(ErrorCode::InvalidConfig, "weights needs three entries");
      c.weights = {w[0], w[1], w[2]};
    }
    c.covis_threshold = j.value("covis", c.covis_threshold);
    c.exclude_frac = j.value("exclude_frac", c.exclude_frac);
    if (j.contains("exclude_predicate")) {
      const auto p = j["exclude_predicate"].get<std::string>();
      if (p == "mask_true") c.exclusion = ExclusionPredicate::MaskTrue;
      else if (p == "mask_false") c.exclusion = ExclusionPredicate::MaskFalse;
      else throw Error(ErrorCode::InvalidConfig, "exclude_predicate must be mask_true|mask_false");
    }
    c.sigma_geo = j.value("sigma_geo", c.sigma_geo);
    c.sigma_merge = j.value("sigma_merge", c.sigma_merge);
    c.tau_sim = j.value("tau_sim", c.tau_sim);
    c.voxel_size = j.value("voxel", c.voxel_size);
    if (j.contains("threshold")) {
      c.threshold_mode = parse_threshold(j["threshold"].get<std::string>(), c.fixed_threshold);
    }
    c.kapur_bins = j.value("kapur_bins", c.kapur_bins);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

}  // namespace scenediff
