#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "scenediff/assets.hpp"
#include "scenediff/detections.hpp"
#include "scenediff/evaluation.hpp"
#include "scenediff/parallel.hpp"

namespace scenediff::synth {

// Axis-aligned cuboid resting anywhere in world space (z up).
struct Cuboid {
  int id = 1;                      // region label, >= 1
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d extents = Eigen::Vector3d::Constant(0.3);  // full side lengths
  std::optional<int> embedding_of;  // share another cuboid's embedding

  Eigen::Vector3d lo() const { return center - 0.5 * extents; }
  Eigen::Vector3d hi() const { return center + 0.5 * extents; }
};

struct Change {
  int id = 0;
  ChangeType type = ChangeType::Removed;
  Eigen::Vector3d displacement = Eigen::Vector3d::Zero();  // Moved only
};

enum class TrajectoryKind { Orbit, Linear };

// Orbit: cameras on a circular arc around `target` at `radius` and `height`
// above it, from start_deg to end_deg. Inward-facing cameras look at the
// target; outward-facing ones look away from it at `outward_distance`.
// Linear: cameras from `start` to `end` looking at `target`.
struct Trajectory {
  TrajectoryKind kind = TrajectoryKind::Orbit;
  int frames = 8;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  double radius = 2.2;
  double height = 2.2;
  double start_deg = 0.0;
  double end_deg = 80.0;
  bool outward = false;
  double outward_distance = 2.0;
  Eigen::Vector3d start = Eigen::Vector3d(2, 0, 2);
  Eigen::Vector3d end = Eigen::Vector3d(0, 2, 2);
};

struct Noise {
  double depth_sigma = 0.0;    // fraction of the scene scale
  double feature_sigma = 0.0;  // per feature entry
  double pose_jitter = 0.0;    // translation jitter (scene units) on stored poses
};

// How a feature cell summarizes the surfaces it covers.
enum class FeatureMode {
  Majority,  // embedding of the majority surface (lowest id on ties)
  Blend      // area-weighted blend of every covered surface's embedding
};

struct SynthScene {
  std::string scene_id = "synth";
  std::uint64_t seed = 0;
  int width = 256;
  int height = 192;
  double hfov_deg = 55.0;
  int feat_stride = 8;
  int feat_dim = 32;
  FeatureMode feature_mode = FeatureMode::Majority;
  Eigen::Vector2d floor_size = Eigen::Vector2d(2.0, 2.0);  // centred on the origin, z = 0
  std::vector<Cuboid> objects;
  std::vector<Change> changes;
  Trajectory before_path;
  Trajectory after_path;
  Noise noise;
  int min_region_pixels = 48;
  bool repetitive = false;  // allows embedding_of sharing
};

struct SynthOutput {
  SequencePair pair;
  GroundTruth gt;
  std::map<int, Eigen::VectorXd> embeddings;  // by cuboid id
};

// ---------------------------------------------------------------------------
// Camera helpers
// ---------------------------------------------------------------------------

inline Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d up(0, 0, 1);
  Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-9) right = Eigen::Vector3d(1, 0, 0);
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Pose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = eye;
  return pose;
}

inline std::vector<Pose> camera_path(const Trajectory& t) {
  std::vector<Pose> poses;
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  for (int i = 0; i < t.frames; ++i) {
    const double u = t.frames == 1 ? 0.5 : static_cast<double>(i) / (t.frames - 1);
    if (t.kind == TrajectoryKind::Linear) {
      poses.push_back(look_at(t.start + u * (t.end - t.start), t.target));
      continue;
    }
    const double a = (t.start_deg + u * (t.end_deg - t.start_deg)) * kDeg;
    const Eigen::Vector3d dir(std::cos(a), std::sin(a), 0.0);
    if (t.outward) {
      const Eigen::Vector3d eye = t.target + t.radius * dir + Eigen::Vector3d(0, 0, t.height);
      poses.push_back(look_at(eye, t.target + (t.radius + t.outward_distance) * dir));
    } else {
      const Eigen::Vector3d eye = t.target + t.radius * dir + Eigen::Vector3d(0, 0, t.height);
      poses.push_back(look_at(eye, t.target));
    }
  }
  return poses;
}

inline Intrinsics scene_intrinsics(const SynthScene& s) {
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  Intrinsics k;
  k.width = s.width;
  k.height = s.height;
  k.fx = k.fy = 0.5 * s.width / std::tan(0.5 * s.hfov_deg * kDeg);
  k.cx = 0.5 * (s.width - 1);
  k.cy = 0.5 * (s.height - 1);
  return k;
}

// ---------------------------------------------------------------------------
// Ray casting
// ---------------------------------------------------------------------------

// Entry parameter of the ray o + t d into a box, or nullopt. Origins inside
// the box do not count as hits.
inline std::optional<double> ray_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                     const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t0 <= 0.0) return std::nullopt;
  return t0;
}

inline std::optional<double> ray_floor(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                       const Eigen::Vector2d& size) {
  if (std::abs(d.z()) < 1e-15) return std::nullopt;
  const double t = -o.z() / d.z();
  if (t <= 0.0) return std::nullopt;
  const Eigen::Vector3d p = o + t * d;
  if (std::abs(p.x()) > 0.5 * size.x() || std::abs(p.y()) > 0.5 * size.y()) return std::nullopt;
  return t;
}

inline constexpr int kFloorSurface = 0;
inline constexpr int kSkySurface = -1;

struct Hit {
  double t = 0.0;      // ray parameter; equals camera-space depth for z=1 rays
  int surface = kSkySurface;
};

inline Hit cast(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                const std::vector<Cuboid>& boxes, const Eigen::Vector2d& floor) {
  Hit hit;
  hit.t = std::numeric_limits<double>::infinity();
  if (auto t = ray_floor(o, d, floor)) hit = {*t, kFloorSurface};
  for (const auto& b : boxes) {
    if (auto t = ray_box(o, d, b.lo(), b.hi()); t && *t < hit.t) hit = {*t, b.id};
  }
  return hit;
}

struct RenderedView {
  Grid<double> depth;         // +inf where nothing is hit
  Grid<std::int32_t> surface;  // cuboid id, floor (0) or sky (-1)
};

inline RenderedView render(const Intrinsics& k, const Pose& pose, const std::vector<Cuboid>& boxes,
                           const Eigen::Vector2d& floor) {
  RenderedView v{Grid<double>(k.height, k.width, std::numeric_limits<double>::infinity()),
                 Grid<std::int32_t>(k.height, k.width, kSkySurface)};
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Eigen::Vector3d d = pose.rotation * k.ray(x, y);
      const Hit h = cast(pose.translation, d, boxes, floor);
      if (h.surface == kSkySurface) continue;
      v.depth(y, x) = h.t;
      v.surface(y, x) = h.surface;
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Scene states and validation
// ---------------------------------------------------------------------------

inline const Change* find_change(const SynthScene& s, int id) {
  for (const auto& c : s.changes)
    if (c.id == id) return &c;
  return nullptr;
}

inline std::vector<Cuboid> scene_state(const SynthScene& s, Side side) {
  std::vector<Cuboid> out;
  for (const auto& o : s.objects) {
    const Change* c = find_change(s, o.id);
    if (c && c->type == ChangeType::Added && side == Side::Before) continue;
    if (c && c->type == ChangeType::Removed && side == Side::After) continue;
    Cuboid b = o;
    if (c && c->type == ChangeType::Moved && side == Side::After) b.center += c->displacement;
    out.push_back(b);
  }
  return out;
}

inline bool boxes_overlap(const Cuboid& a, const Cuboid& b, double gap = 0.0) {
  for (int k = 0; k < 3; ++k) {
    if (a.hi()[k] + gap <= b.lo()[k] || b.hi()[k] + gap <= a.lo()[k]) return false;
  }
  return true;
}

inline void validate(const SynthScene& s) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); };
  if (s.width <= 0 || s.height <= 0) fail("image size must be positive");
  if (s.feat_stride <= 0 || s.width % s.feat_stride || s.height % s.feat_stride)
    fail("feat_stride must divide the image size");
  if (s.feat_dim <= 0) fail("feat_dim must be positive");
  if (s.before_path.frames < 1 || s.after_path.frames < 1) fail("empty trajectory");
  std::map<int, int> ids;
  for (const auto& o : s.objects) {
    if (o.id < 1) fail("cuboid ids must be >= 1");
    if (!(o.extents.array() > 0.0).all()) fail("cuboid extents must be positive");
    if (ids[o.id]++) fail("duplicate cuboid id " + std::to_string(o.id));
    if (o.embedding_of && !s.repetitive) fail("embedding_of requires the repetitive flag");
  }
  for (const auto& c : s.changes) {
    if (!ids.count(c.id)) fail("change refers to unknown cuboid " + std::to_string(c.id));
  }
  for (Side side : {Side::Before, Side::After}) {
    const auto state = scene_state(s, side);
    for (std::size_t i = 0; i < state.size(); ++i)
      for (std::size_t j = i + 1; j < state.size(); ++j)
        if (boxes_overlap(state[i], state[j]))
          fail("cuboids " + std::to_string(state[i].id) + " and " + std::to_string(state[j].id) +
               " intersect");
  }
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

// Seeded Gaussian directions, Gram-Schmidt-orthogonalised in order while the
// dimension allows it. Index 0 is the floor, 1 the sky, then cuboids in spec
// order (shared embeddings reuse their source's vector).
inline std::map<int, Eigen::VectorXd> make_embeddings(const SynthScene& s,
                                                      Eigen::VectorXd& floor_emb,
                                                      Eigen::VectorXd& sky_emb) {
  std::mt19937_64 rng(s.seed * 0x9E3779B97F4A7C15ull + 17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Eigen::VectorXd> basis;
  auto draw = [&]() {
    Eigen::VectorXd v(s.feat_dim);
    for (int i = 0; i < s.feat_dim; ++i) v[i] = gauss(rng);
    if (static_cast<int>(basis.size()) < s.feat_dim) {
      for (const auto& b : basis) v -= v.dot(b) * b;
    }
    v.normalize();
    basis.push_back(v);
    return v;
  };
  floor_emb = draw();
  sky_emb = draw();
  std::map<int, Eigen::VectorXd> out;
  for (const auto& o : s.objects) {
    if (!o.embedding_of) out[o.id] = draw();
  }
  for (const auto& o : s.objects) {
    if (o.embedding_of) {
      auto it = out.find(*o.embedding_of);
      if (it == out.end()) throw Error(ErrorCode::InvalidSpec, "embedding_of unknown cuboid");
      out[o.id] = it->second;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t frame_seed(std::uint64_t seed, Side side, int index, int stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(side == Side::After),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace detail

inline FrameAsset render_frame(const SynthScene& s, Side side, int index, const Pose& pose,
                               const std::vector<Cuboid>& state,
                               const std::map<int, Eigen::VectorXd>& embeddings,
                               const Eigen::VectorXd& floor_emb, const Eigen::VectorXd& sky_emb,
                               double scene_scale) {
  const Intrinsics k = scene_intrinsics(s);
  const auto view = render(k, pose, state, s.floor_size);
  FrameAsset f;
  f.frame_id = index;
  f.intrinsics = k;
  f.pose = pose;
  f.depth.values = Grid<double>(k.height, k.width, 0.0);
  f.depth.valid = Grid<std::uint8_t>(k.height, k.width, 0);

  std::mt19937_64 depth_rng(detail::frame_seed(s.seed, side, index, 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double depth_sigma = s.noise.depth_sigma * scene_scale;
  Grid<std::int32_t> labels(k.height, k.width, 0);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const int surface = view.surface(y, x);
      if (surface == kSkySurface) continue;
      double d = view.depth(y, x);
      if (depth_sigma > 0.0) d = std::max(1e-3, d + depth_sigma * gauss(depth_rng));
      // Quantized to float32 so the written assets reload bit-exactly.
      f.depth.values(y, x) = static_cast<float>(d);
      f.depth.valid(y, x) = 1;
      labels(y, x) = surface > 0 ? surface : 0;
    }
  }
  // Regions below the minimum size are dropped to background.
  std::map<int, int> counts;
  for (auto l : labels.values())
    if (l > 0) ++counts[l];
  for (auto& l : labels.storage())
    if (l > 0 && counts[l] < s.min_region_pixels) l = 0;
  f.regions = RegionMap::from_labels(std::move(labels));

  const int st = s.feat_stride, fh = k.height / st, fw = k.width / st, c = s.feat_dim;
  f.features.values = VectorGrid<float>(fh, fw, c, 0.0f);
  std::mt19937_64 feat_rng(detail::frame_seed(s.seed, side, index, 2));
  const double area = static_cast<double>(st) * st;
  auto embedding = [&](int id) -> const Eigen::VectorXd& {
    return id == kSkySurface ? sky_emb : id == kFloorSurface ? floor_emb : embeddings.at(id);
  };
  for (int cy = 0; cy < fh; ++cy) {
    for (int cx = 0; cx < fw; ++cx) {
      std::map<int, int> votes;
      for (int y = cy * st; y < (cy + 1) * st; ++y)
        for (int x = cx * st; x < (cx + 1) * st; ++x) ++votes[view.surface(y, x)];
      Eigen::VectorXd e = Eigen::VectorXd::Zero(c);
      if (s.feature_mode == FeatureMode::Blend) {
        for (const auto& [id, n] : votes) e += (n / area) * embedding(id);
      } else {
        int best = kSkySurface, best_count = -1;
        for (const auto& [id, n] : votes)
          if (n > best_count) best = id, best_count = n;
        e = embedding(best);
      }
      auto cell = f.features.values.at(cy, cx);
      for (int i = 0; i < c; ++i) {
        double v = e[i];
        if (s.noise.feature_sigma > 0.0) v += s.noise.feature_sigma * gauss(feat_rng);
        cell[i] = static_cast<float>(v);
      }
    }
  }
  if (s.noise.pose_jitter > 0.0) {
    std::mt19937_64 pose_rng(detail::frame_seed(s.seed, side, index, 3));
    for (int a = 0; a < 3; ++a) f.pose.translation[a] += s.noise.pose_jitter * gauss(pose_rng);
  }
  return f;
}

inline double scene_scale(const SynthScene& s) { return s.floor_size.maxCoeff(); }

// Renders both videos and derives GT boxes from the rendered region maps of
// the changed cuboids.
inline SynthOutput generate(const SynthScene& s, int workers = 1) {
  validate(s);
  SynthOutput out;
  Eigen::VectorXd floor_emb, sky_emb;
  out.embeddings = make_embeddings(s, floor_emb, sky_emb);
  out.pair.scene_id = s.scene_id;
  const double scale = scene_scale(s);
  for (Side side : {Side::Before, Side::After}) {
    const auto poses = camera_path(side == Side::Before ? s.before_path : s.after_path);
    const auto state = scene_state(s, side);
    auto& frames = out.pair.frames(side);
    frames.resize(poses.size());
    parallel_for(poses.size(), workers, [&](std::size_t i) {
      frames[i] = render_frame(s, side, static_cast<int>(i), poses[i], state, out.embeddings,
                               floor_emb, sky_emb, scale);
    });
  }

  out.gt.scene_id = s.scene_id;
  for (const auto& c : s.changes) {
    GtObject g{c.id, c.type, {}};
    for (Side side : {Side::Before, Side::After}) {
      if (c.type == ChangeType::Added && side == Side::Before) continue;
      if (c.type == ChangeType::Removed && side == Side::After) continue;
      bool seen = false;
      for (const auto& f : out.pair.frames(side)) {
        if (f.regions.index_of(c.id) < 0) continue;
        InstanceMask m{c.id, c.type, side, f.frame_id,
                       Grid<std::uint8_t>(f.height(), f.width(), 0)};
        for (std::size_t i = 0; i < m.mask.size(); ++i)
          m.mask[i] = f.regions.labels[i] == c.id ? 1 : 0;
        g.boxes.push_back(mask_to_box(m));
        seen = true;
      }
      if (!seen) {
        throw Error(ErrorCode::InvalidSpec, "changed cuboid " + std::to_string(c.id) +
                                                " is never visible in the " + to_string(side) +
                                                " video");
      }
    }
    out.gt.objects.push_back(std::move(g));
  }
  return out;
}

inline void write_output(const SynthOutput& out, const std::filesystem::path& dir) {
  save_sequence_pair(out.pair, dir);
  write_json_file(dir / "gt.json", to_json(out.gt));
}

// ---------------------------------------------------------------------------
// JSON spec
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::Vector3d vec3(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorCode::InvalidSpec, "expected a 3-vector");
  return {v[0], v[1], v[2]};
}

inline nlohmann::json vec3_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  const std::string kind = j.value("kind", std::string("orbit"));
  if (kind == "orbit") {
    t.kind = TrajectoryKind::Orbit;
  } else if (kind == "linear") {
    t.kind = TrajectoryKind::Linear;
  } else {
    throw Error(ErrorCode::InvalidSpec, "unknown trajectory kind '" + kind + "'");
  }
  t.frames = j.value("frames", t.frames);
  if (j.contains("target")) t.target = vec3(j["target"]);
  t.radius = j.value("radius", t.radius);
  t.height = j.value("height", t.height);
  t.start_deg = j.value("start_deg", t.start_deg);
  t.end_deg = j.value("end_deg", t.end_deg);
  t.outward = j.value("facing", std::string("inward")) == "outward";
  t.outward_distance = j.value("outward_distance", t.outward_distance);
  if (j.contains("start")) t.start = vec3(j["start"]);
  if (j.contains("end")) t.end = vec3(j["end"]);
  return t;
}

inline nlohmann::ordered_json trajectory_json(const Trajectory& t) {
  nlohmann::ordered_json j;
  j["kind"] = t.kind == TrajectoryKind::Orbit ? "orbit" : "linear";
  j["frames"] = t.frames;
  j["target"] = vec3_json(t.target);
  if (t.kind == TrajectoryKind::Orbit) {
    j["radius"] = t.radius;
    j["height"] = t.height;
    j["start_deg"] = t.start_deg;
    j["end_deg"] = t.end_deg;
    j["facing"] = t.outward ? "outward" : "inward";
    if (t.outward) j["outward_distance"] = t.outward_distance;
  } else {
    j["start"] = vec3_json(t.start);
    j["end"] = vec3_json(t.end);
  }
  return j;
}

}  // namespace detail

inline SynthScene scene_from_json(const nlohmann::json& j) {
  SynthScene s;
  try {
    s.scene_id = j.value("scene_id", s.scene_id);
    s.seed = j.value("seed", s.seed);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.hfov_deg = j.value("hfov_deg", s.hfov_deg);
    s.feat_stride = j.value("feat_stride", s.feat_stride);
    s.feat_dim = j.value("feat_dim", s.feat_dim);
    if (j.contains("feature_mode")) {
      const auto m = j["feature_mode"].get<std::string>();
      if (m == "majority") s.feature_mode = FeatureMode::Majority;
      else if (m == "blend") s.feature_mode = FeatureMode::Blend;
      else throw Error(ErrorCode::InvalidSpec, "feature_mode must be majority|blend");
    }
    if (j.contains("floor_size")) {
      const auto v = j["floor_size"].get<std::vector<double>>();
      if (v.size() != 2) throw Error(ErrorCode::InvalidSpec, "floor_size needs 2 entries");
      s.floor_size = {v[0], v[1]};
    }
    for (const auto& jo : j.at("objects")) {
      Cuboid c;
      c.id = jo.at("id").get<int>();
      c.center = detail::vec3(jo.at("center"));
      c.extents = detail::vec3(jo.at("extents"));
      if (jo.contains("embedding_of")) c.embedding_of = jo["embedding_of"].get<int>();
      s.objects.push_back(c);
    }
    if (j.contains("changes")) {
      for (const auto& jc : j["changes"]) {
        Change c;
        c.id = jc.at("id").get<int>();
        c.type = parse_change_type(jc.at("type").get<std::string>());
        if (jc.contains("displacement")) c.displacement = detail::vec3(jc["displacement"]);
        s.changes.push_back(c);
      }
    }
    if (j.contains("before_path")) s.before_path = detail::trajectory_from_json(j["before_path"]);
    if (j.contains("after_path")) s.after_path = detail::trajectory_from_json(j["after_path"]);
    if (j.contains("noise")) {
      s.noise.depth_sigma = j["noise"].value("depth_sigma", 0.0);
      s.noise.feature_sigma = j["noise"].value("feature_sigma", 0.0);
      s.noise.pose_jitter = j["noise"].value("pose_jitter", 0.0);
    }
    s.min_region_pixels = j.value("min_region_pixels", s.min_region_pixels);
    s.repetitive = j.value("repetitive", s.repetitive);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, e.what());
  }
  return s;
}

inline nlohmann::ordered_json to_json(const SynthScene& s) {
  nlohmann::ordered_json j;
  j["scene_id"] = s.scene_id;
  j["seed"] = s.seed;
  j["width"] = s.width;
  j["height"] = s.height;
  j["hfov_deg"] = s.hfov_deg;
  j["feat_stride"] = s.feat_stride;
  j["feat_dim"] = s.feat_dim;
  j["feature_mode"] = s.feature_mode == FeatureMode::Blend ? "blend" : "majority";
  j["floor_size"] = {s.floor_size.x(), s.floor_size.y()};
  j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : s.objects) {
    nlohmann::ordered_json jo{{"id", o.id},
                              {"center", detail::vec3_json(o.center)},
                              {"extents", detail::vec3_json(o.extents)}};
    if (o.embedding_of) jo["embedding_of"] = *o.embedding_of;
    j["objects"].push_back(std::move(jo));
  }
  j["changes"] = nlohmann::ordered_json::array();
  for (const auto& c : s.changes) {
    nlohmann::ordered_json jc{{"id", c.id}, {"type", to_string(c.type)}};
    if (c.type == ChangeType::Moved) jc["displacement"] = detail::vec3_json(c.displacement);
    j["changes"].push_back(std::move(jc));
  }
  j["before_path"] = detail::trajectory_json(s.before_path);
  j["after_path"] = detail::trajectory_json(s.after_path);
  j["noise"] = {{"depth_sigma", s.noise.depth_sigma},
                {"feature_sigma", s.noise.feature_sigma},
                {"pose_jitter", s.noise.pose_jitter}};
  j["min_region_pixels"] = s.min_region_pixels;
  j["repetitive"] = s.repetitive;
  return j;
}

// ---------------------------------------------------------------------------
// Random scenes
// ---------------------------------------------------------------------------

struct RandomSceneOptions {
  int min_objects = 5;
  int max_objects = 15;
  int min_changes = 1;
  int max_changes = 4;
  int frames = 8;
  int width = 256;
  int height = 192;
  Noise noise;
};

namespace detail {

// Footprint rectangle of a cuboid grown by `gap`, tested in the floor plane.
inline bool footprints_clash(const Cuboid& a, const Cuboid& b, double gap) {
  return std::abs(a.center.x() - b.center.x()) < 0.5 * (a.extents.x() + b.extents.x()) + gap &&
         std::abs(a.center.y() - b.center.y()) < 0.5 * (a.extents.y() + b.extents.y()) + gap;
}

inline std::optional<SynthScene> try_random_scene(std::uint64_t seed, std::mt19937_64& rng,
                                                  const RandomSceneOptions& opt) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

  SynthScene s;
  s.scene_id = "synth_" + std::to_string(seed);
  s.seed = seed;
  s.width = opt.width;
  s.height = opt.height;
  s.noise = opt.noise;
  const double half = 0.8;
  const double gap = 0.1;
  const int n = pick(opt.min_objects, opt.max_objects);
  const double max_side = n > 10 ? 0.32 : 0.4;
  for (int id = 1; id <= n; ++id) {
    bool placed = false;
    for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
      Cuboid c;
      c.id = id;
      c.extents = {uniform(0.2, max_side), uniform(0.2, max_side), uniform(0.15, 0.4)};
      c.center = {uniform(-half + 0.5 * c.extents.x(), half - 0.5 * c.extents.x()),
                  uniform(-half + 0.5 * c.extents.y(), half - 0.5 * c.extents.y()),
                  0.5 * c.extents.z()};
      placed = std::none_of(s.objects.begin(), s.objects.end(),
                            [&](const Cuboid& o) { return footprints_clash(o, c, gap); });
      if (placed) s.objects.push_back(c);
    }
    if (!placed) return std::nullopt;
  }

  const int n_changes = std::min(pick(opt.min_changes, opt.max_changes), n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i + 1;
  std::shuffle(order.begin(), order.end(), rng);
  for (int k = 0; k < n_changes; ++k) {
    Change c;
    c.id = order[k];
    c.type = static_cast<ChangeType>(pick(0, 2));
    if (c.type == ChangeType::Moved) {
      Cuboid& obj = s.objects[c.id - 1];
      bool placed = false;
      for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
        Cuboid moved = obj;
        moved.center.x() = uniform(-half + 0.5 * obj.extents.x(), half - 0.5 * obj.extents.x());
        moved.center.y() = uniform(-half + 0.5 * obj.extents.y(), half - 0.5 * obj.extents.y());
        if (footprints_clash(moved, obj, gap)) continue;
        placed = std::none_of(s.objects.begin(), s.objects.end(), [&](const Cuboid& o) {
          return o.id != obj.id && footprints_clash(o, moved, gap);
        });
        // Keep clear of earlier moves' destinations.
        for (const auto& other : s.changes) {
          if (other.type != ChangeType::Moved) continue;
          Cuboid dest = s.objects[other.id - 1];
          dest.center += other.displacement;
          if (footprints_clash(dest, moved, gap)) placed = false;
        }
        if (placed) c.displacement = moved.center - obj.center;
      }
      if (!placed) c.type = ChangeType::Removed;
    }
    s.changes.push_back(c);
  }
  // Destinations of moves must also avoid every object's original footprint.
  for (const auto& c : s.changes) {
    if (c.type != ChangeType::Moved) continue;
    Cuboid dest = s.objects[c.id - 1];
    dest.center += c.displacement;
    for (const auto& o : s.objects)
      if (o.id != c.id && footprints_clash(o, dest, gap)) return std::nullopt;
  }

  const double start = uniform(0.0, 360.0);
  s.before_path.frames = opt.frames;
  s.before_path.target = {0, 0, 0.1};
  s.before_path.start_deg = start;
  s.before_path.end_deg = start + uniform(60.0, 90.0);
  s.after_path = s.before_path;
  const double shift = uniform(-20.0, 20.0);
  s.after_path.start_deg += shift;
  s.after_path.end_deg += shift;
  s.after_path.height = s.before_path.height + uniform(-0.2, 0.2);
  s.after_path.radius = s.before_path.radius + uniform(-0.2, 0.2);
  return s;
}

}  // namespace detail

// Draws random scenes for `seed` until one validates and renders with every
// changed cuboid visible in each video where it exists.
inline SynthScene random_scene(std::uint64_t seed, const RandomSceneOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 200; ++attempt) {
    auto s = detail::try_random_scene(seed, rng, opt);
    if (!s) continue;
    try {
      generate(*s);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidSpec) continue;
      throw;
    }
    return *s;
  }
  throw Error(ErrorCode::InvalidSpec, "could not draw a valid random scene");
}

// ---------------------------------------------------------------------------
// Stress suite
// ---------------------------------------------------------------------------

enum class Expectation {
  NoDetections,          // nothing above the fixed threshold
  MatchesGroundTruth,    // AP = 1 in every metric
  Ambiguous,             // either interpretation of the change is accepted
  OccluderNotFlagged,    // the occluded-but-unchanged cuboid is never detected
};

struct StressCase {
  std::string name;
  SynthScene scene;
  Expectation expectation;
  int watch_id = 0;  // cuboid of interest for OccluderNotFlagged
};

namespace detail {

inline SynthScene base_scene(const std::string& id, std::uint64_t seed) {
  SynthScene s;
  s.scene_id = id;
  s.seed = seed;
  const double layout[][6] = {
      {-0.5, -0.45, 0.30, 0.28, 0.30, 0},
      {0.45, -0.5, 0.26, 0.34, 0.22, 0},
      {0.0, 0.05, 0.32, 0.30, 0.38, 0},
      {-0.5, 0.5, 0.34, 0.26, 0.25, 0},
      {0.5, 0.45, 0.28, 0.30, 0.32, 0},
      {0.05, -0.6, 0.24, 0.22, 0.18, 0},
  };
  int id_next = 1;
  for (const auto& l : layout) {
    Cuboid c;
    c.id = id_next++;
    c.center = {l[0], l[1], 0.5 * l[4]};
    c.extents = {l[2], l[3], l[4]};
    s.objects.push_back(c);
  }
  s.before_path.start_deg = 10;
  s.before_path.end_deg = 90;
  s.before_path.target = {0, 0, 0.1};
  s.after_path = s.before_path;
  s.after_path.start_deg = 20;
  s.after_path.end_deg = 100;
  return s;
}

}  // namespace detail

inline std::vector<StressCase> stress_suite() {
  std::vector<StressCase> cases;

  cases.push_back({"no_change", detail::base_scene("stress_no_change", 101),
                   Expectation::NoDetections});

  auto add = detail::base_scene("stress_single_add", 102);
  add.changes.push_back({4, ChangeType::Added, {}});
  cases.push_back({"single_add", add, Expectation::MatchesGroundTruth});

  auto remove = detail::base_scene("stress_single_remove", 103);
  remove.changes.push_back({3, ChangeType::Removed, {}});
  cases.push_back({"single_remove", remove, Expectation::MatchesGroundTruth});

  auto move = detail::base_scene("stress_single_move", 104);
  move.changes.push_back({6, ChangeType::Moved, {0.55, 0.45, 0.0}});
  cases.push_back({"single_move", move, Expectation::MatchesGroundTruth});

  // Two identical cuboids with one shared embedding trade places.
  auto swap = detail::base_scene("stress_identical_swap", 105);
  swap.repetitive = true;
  swap.objects[4].extents = swap.objects[3].extents;
  swap.objects[4].center.z() = swap.objects[3].center.z();
  swap.objects[4].embedding_of = swap.objects[3].id;
  {
    const Eigen::Vector3d d = swap.objects[4].center - swap.objects[3].center;
    swap.changes.push_back({4, ChangeType::Moved, d});
    swap.changes.push_back({5, ChangeType::Moved, -d});
    // Pass through validation: swap destinations coincide with the partner's
    // origin, which is empty in the after state.
  }
  cases.push_back({"identical_swap", swap, Expectation::Ambiguous});

  // Shelf of repetitive items: identical cuboids sharing one embedding.
  SynthScene shelf;
  shelf.scene_id = "stress_repetitive";
  shelf.seed = 106;
  shelf.repetitive = true;
  int id = 1;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) {
      Cuboid b;
      b.id = id++;
      b.extents = {0.22, 0.22, 0.26};
      b.center = {-0.6 + 0.4 * c, -0.4 + 0.4 * r, 0.13};
      if (b.id > 1) b.embedding_of = 1;
      shelf.objects.push_back(b);
    }
  shelf.before_path = detail::base_scene("", 0).before_path;
  shelf.after_path = detail::base_scene("", 0).after_path;
  shelf.changes.push_back({6, ChangeType::Removed, {}});
  cases.push_back({"repetitive_items", shelf, Expectation::Ambiguous});

  // A wall hides cuboid 7 from every after view; nothing about it changes.
  auto occl = detail::base_scene("stress_occlusion", 107);
  occl.objects.erase(occl.objects.begin() + 3, occl.objects.end());
  {
    Cuboid wall;
    wall.id = 7;  // hidden cuboid uses id 8
    wall.center = {0.0, 0.55, 0.45};
    wall.extents = {1.3, 0.12, 0.9};
    Cuboid hidden;
    hidden.id = 8;
    hidden.center = {0.0, 0.85, 0.15};
    hidden.extents = {0.3, 0.26, 0.3};
    occl.objects.push_back(wall);
    occl.objects.push_back(hidden);
  }
  occl.objects[1].center = {0.5, -0.45, 0.11};
  occl.before_path.start_deg = 75;
  occl.before_path.end_deg = 105;
  occl.before_path.target = {0, 0.3, 0.1};
  occl.after_path = occl.before_path;
  occl.after_path.start_deg = 255;
  occl.after_path.end_deg = 285;
  occl.after_path.target = {0, 0, 0.1};
  occl.changes.push_back({1, ChangeType::Removed, {}});
  cases.push_back({"heavy_occlusion", occl, Expectation::OccluderNotFlagged, 8});

  auto two = detail::base_scene("stress_two_image", 108);
  two.before_path.frames = 1;
  two.after_path.frames = 1;
  two.changes.push_back({3, ChangeType::Removed, {}});
  cases.push_back({"two_image", two, Expectation::MatchesGroundTruth});

  return cases;
}

}  // namespace scenediff::synth
