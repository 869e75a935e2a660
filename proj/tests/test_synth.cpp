#include <cmath>

#include <gtest/gtest.h>

#include "scenediff/geometry.hpp"
#include "scenediff/synth.hpp"
#include "test_util.hpp"

using namespace scenediff;

namespace {

synth::SynthScene small_scene() {
  auto s = synth::stress_suite()[3].scene;  // single move
  s.width = 96;
  s.height = 72;
  s.before_path.frames = 3;
  s.after_path.frames = 2;
  return s;
}

ErrorCode spec_error(const synth::SynthScene& s) {
  try {
    synth::validate(s);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::MalformedInput;
}

}  // namespace

TEST(Synth, GenerationIsDeterministic) {
  const auto s = small_scene();
  const auto a = synth::generate(s, 1);
  const auto b = synth::generate(s, 4);
  EXPECT_TRUE(a.pair == b.pair);
  EXPECT_EQ(a.gt, b.gt);
  auto noisy = s;
  noisy.noise = {0.005, 0.05, 0.0};
  EXPECT_TRUE(synth::generate(noisy, 1).pair == synth::generate(noisy, 3).pair);
  EXPECT_FALSE(synth::generate(noisy).pair == a.pair);
}

TEST(Synth, RayCastHitsBoxAndFloor) {
  const std::vector<synth::Cuboid> boxes{{3, {0, 0, 0.5}, {1, 1, 1}, {}}};
  const Eigen::Vector2d floor(4, 4);
  // From above, straight down onto the top face at z = 1.
  auto h = synth::cast({0.2, 0.1, 3}, {0, 0, -1}, boxes, floor);
  EXPECT_EQ(h.surface, 3);
  EXPECT_DOUBLE_EQ(h.t, 2.0);
  h = synth::cast({1.5, 0, 3}, {0, 0, -1}, boxes, floor);
  EXPECT_EQ(h.surface, synth::kFloorSurface);
  EXPECT_DOUBLE_EQ(h.t, 3.0);
  h = synth::cast({5, 0, 3}, {0, 0, -1}, boxes, floor);  // beyond the floor
  EXPECT_EQ(h.surface, synth::kSkySurface);
  h = synth::cast({0, -3, 0.5}, {0, 1, 0}, boxes, floor);  // side face at y = -0.5
  EXPECT_EQ(h.surface, 3);
  EXPECT_DOUBLE_EQ(h.t, 2.5);
}

TEST(Synth, RenderedDepthSolvesTheRayEquation) {
  const auto s = small_scene();
  const auto out = synth::generate(s);
  const auto state = synth::scene_state(s, Side::Before);
  for (const auto& f : out.pair.before) {
    for (int y = 0; y < f.height(); y += 5)
      for (int x = 0; x < f.width(); x += 5) {
        if (!f.depth.is_valid(y, x)) continue;
        const Eigen::Vector3d p = unproject_pixel(f, x, y, f.depth.values(y, x));
        double dist = std::abs(p.z());
        for (const auto& b : state) {
          const Eigen::Vector3d q = p.cwiseMax(b.lo()).cwiseMin(b.hi());
          const Eigen::Vector3d out_d = (p - q).cwiseAbs();
          const Eigen::Vector3d in_d = (p - b.lo()).cwiseAbs().cwiseMin((b.hi() - p).cwiseAbs());
          dist = std::min(dist, (p - q).norm() > 0 ? out_d.norm() : in_d.minCoeff());
        }
        ASSERT_LT(dist, 1e-5) << x << "," << y;
      }
  }
}

TEST(Synth, ScenesInvariantsAndErrors) {
  auto s = small_scene();
  EXPECT_NO_THROW(synth::validate(s));
  auto overlap = s;
  overlap.objects[1].center = overlap.objects[0].center;
  EXPECT_EQ(spec_error(overlap), ErrorCode::InvalidSpec);
  auto unknown = s;
  unknown.changes.push_back({42, ChangeType::Removed, {}});
  EXPECT_EQ(spec_error(unknown), ErrorCode::InvalidSpec);
  auto stride = s;
  stride.feat_stride = 7;
  EXPECT_EQ(spec_error(stride), ErrorCode::InvalidSpec);
  auto share = s;
  share.objects[1].embedding_of = 1;
  EXPECT_EQ(spec_error(share), ErrorCode::InvalidSpec);
  auto dup = s;
  dup.objects[1].id = dup.objects[0].id;
  EXPECT_EQ(spec_error(dup), ErrorCode::InvalidSpec);

  // A removed cuboid that no before camera sees cannot produce ground truth.
  auto hidden = s;
  hidden.objects[0].center = {5, 5, 0.15};
  hidden.changes = {{1, ChangeType::Removed, {}}};
  EXPECT_THROW(synth::generate(hidden), Error);
}

TEST(Synth, GroundTruthFollowsTheChangeList) {
  const auto out = synth::generate(small_scene());
  ASSERT_EQ(out.gt.objects.size(), 1u);
  const auto& g = out.gt.objects[0];
  EXPECT_EQ(g.change_type, ChangeType::Moved);
  EXPECT_NO_THROW(validate(out.gt));
  for (const auto& b : g.boxes) {
    const auto& f = out.pair.frames(b.video)[b.frame_id];
    int inside = 0;
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x)
        if (f.regions.labels(y, x) == g.gt_id) {
          ASSERT_TRUE(b.contains(x, y));
          ++inside;
        }
    EXPECT_GT(inside, 0);
  }
}

TEST(Synth, EmbeddingsAreOrthonormalWhileTheDimensionAllows) {
  const auto s = small_scene();
  Eigen::VectorXd floor, sky;
  const auto emb = synth::make_embeddings(s, floor, sky);
  std::vector<Eigen::VectorXd> all{floor, sky};
  for (const auto& [id, v] : emb) all.push_back(v);
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = 0; j < all.size(); ++j)
      EXPECT_NEAR(all[i].dot(all[j]), i == j ? 1.0 : 0.0, 1e-12);
}

TEST(Synth, FeatureModesDifferOnlyAtBoundaries) {
  auto s = small_scene();
  const auto majority = synth::generate(s);
  s.feature_mode = synth::FeatureMode::Blend;
  const auto blend = synth::generate(s);
  const auto& a = majority.pair.before[0].features.values;
  const auto& b = blend.pair.before[0].features.values;
  int same = 0, differ = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      bool eq = true;
      for (int c = 0; c < a.channels(); ++c) eq &= a.at(y, x)[c] == b.at(y, x)[c];
      (eq ? same : differ)++;
    }
  EXPECT_GT(same, differ);
  EXPECT_GT(differ, 0);
  EXPECT_TRUE(majority.pair.before[0].depth == blend.pair.before[0].depth);
}

TEST(Synth, SpecJsonRoundTrip) {
  auto s = synth::stress_suite()[4].scene;  // shared embeddings, two moves
  s.noise = {0.01, 0.02, 0.003};
  s.feature_mode = synth::FeatureMode::Blend;
  const auto back = synth::scene_from_json(nlohmann::json::parse(synth::to_json(s).dump()));
  EXPECT_EQ(synth::to_json(back).dump(), synth::to_json(s).dump());
  EXPECT_TRUE(synth::generate(back).pair == synth::generate(s).pair);

  auto j = synth::to_json(s);
  j["feature_mode"] = "median";
  EXPECT_THROW(synth::scene_from_json(j), Error);
  j.erase("objects");
  EXPECT_THROW(synth::scene_from_json(j), Error);
}

TEST(Synth, RandomScenesHonourTheOptions) {
  synth::RandomSceneOptions opt;
  opt.width = 128;
  opt.height = 96;
  opt.frames = 3;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = synth::random_scene(seed, opt);
    EXPECT_GE(s.objects.size(), 5u);
    EXPECT_LE(s.objects.size(), 15u);
    EXPECT_GE(s.changes.size(), 1u);
    EXPECT_LE(s.changes.size(), 4u);
    EXPECT_EQ(s.before_path.frames, 3);
    EXPECT_EQ(synth::to_json(synth::random_scene(seed, opt)).dump(), synth::to_json(s).dump());
  }
}

TEST(Synth, StressSuiteValidates) {
  for (const auto& c : synth::stress_suite()) {
    SCOPED_TRACE(c.name);
    EXPECT_NO_THROW(synth::validate(c.scene));
  }
}
