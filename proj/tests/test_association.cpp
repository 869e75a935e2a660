#include <random>

#include <gtest/gtest.h>

#include "scenediff/association.hpp"
#include "test_util.hpp"

using namespace scenediff;

namespace {

FrameAsset labelled(int w, int h, const std::vector<std::int32_t>& labels) {
  auto f = testutil::plane_frame(w, h, 4.0, 1.0, 2, 1);
  f.regions = RegionMap::from_labels(Grid<std::int32_t>(h, w, labels));
  return f;
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

PointCloud line_cloud(int n, double x0, double spacing = 0.05) {
  PointCloud c;
  for (int i = 0; i < n; ++i) c.points.emplace_back(x0 + i * spacing, 0.0, 0.0);
  return c;
}

DetectedRegion region(int frame, std::int32_t label, Eigen::VectorXd f, const PointCloud* cloud,
                      double score = 0.5) {
  DetectedRegion r;
  r.frame_index = frame;
  r.frame_id = frame;
  r.label = label;
  r.score = score;
  r.feature = std::move(f);
  r.cloud = cloud;
  return r;
}

ChangedObject object_with(Eigen::VectorXd f, int id) {
  ChangedObject o;
  o.object_id = id;
  o.feature = std::move(f);
  return o;
}

}  // namespace

TEST(Association, AveragesOverPairs) {
  std::vector<FrameAsset> frames{labelled(2, 1, {1, 2}), labelled(2, 1, {1, 2})};
  std::vector<DirectedRegionScores> d{
      {Side::Before, 0, 0, {{0.2, 1.0}, {1, 1}}},
      {Side::Before, 0, 1, {{0.4, 0.0}, {1, 1}}},
      {Side::Before, 1, 0, {{0.7, 0.9}, {1, 1}}},
      {Side::After, 0, 0, {{5.0, 5.0}, {1, 1}}},  // other side ignored
  };
  const auto avg = average_frame_scores(frames, Side::Before, d);
  EXPECT_NEAR(avg[0].score[0], 0.3, 1e-15);
  EXPECT_NEAR(avg[0].score[1], 0.5, 1e-15);
  EXPECT_EQ(avg[1].score, (std::vector<double>{0.7, 0.9}));
  EXPECT_EQ(avg[0].pair_count, (std::vector<int>{2, 2}));
}

TEST(Association, AverageMatchesBruteForceMean) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  std::vector<FrameAsset> frames{labelled(3, 1, {1, 2, 3})};
  std::vector<DirectedRegionScores> d;
  std::vector<double> sum(3, 0.0);
  for (int p = 0; p < 3; ++p) {
    RegionScoreMap m{{u(rng), u(rng), u(rng)}, {1, 1, 1}};
    for (int r = 0; r < 3; ++r) sum[r] += m.delta[r];
    d.push_back({Side::Before, 0, p, m});
  }
  const auto avg = average_frame_scores(frames, Side::Before, d);
  for (int r = 0; r < 3; ++r) EXPECT_NEAR(avg[0].score[r], sum[r] / 3, 1e-15);
}

TEST(Association, VoxelConsistencyAveragesSharedVoxels) {
  // The same physical region in two frames, co-voxelized exactly.
  std::vector<FrameChangeScores> s(2);
  s[0] = {{0.1}, {1}, {line_cloud(5, 0.005)}};
  s[1] = {{0.5}, {1}, {line_cloud(5, 0.005)}};
  voxel_consistency(s, 0.02);
  EXPECT_NEAR(s[0].score[0], 0.3, 1e-12);
  EXPECT_NEAR(s[1].score[0], 0.3, 1e-12);

  // Half-overlapping: 2 of 4 voxels are shared, hand arithmetic gives
  // 0.1*0.5 + 0.3*0.5 = 0.2 and 0.5*0.5 + 0.3*0.5 = 0.4.
  std::vector<FrameChangeScores> h(2);
  h[0] = {{0.1}, {1}, {line_cloud(4, 0.005)}};
  h[1] = {{0.5}, {1}, {line_cloud(4, 0.105)}};
  voxel_consistency(h, 0.02);
  EXPECT_NEAR(h[0].score[0], 0.2, 1e-12);
  EXPECT_NEAR(h[1].score[0], 0.4, 1e-12);
}

TEST(Association, VoxelConsistencyFixedPointAndNoOp) {
  std::vector<FrameChangeScores> s(1);
  s[0] = {{0.25, 0.75}, {1, 1}, {line_cloud(6, 0.005), line_cloud(6, 1.005)}};
  voxel_consistency(s);
  EXPECT_NEAR(s[0].score[0], 0.25, 1e-9);
  EXPECT_NEAR(s[0].score[1], 0.75, 1e-9);

  std::vector<FrameChangeScores> empty;
  voxel_consistency(empty);
  std::vector<FrameChangeScores> no_regions(2);
  voxel_consistency(no_regions);
  EXPECT_TRUE(no_regions[0].score.empty());
}

TEST(Association, DetectRegionsIsStrict) {
  std::vector<FrameAsset> frames{labelled(3, 1, {1, 2, 3})};
  std::vector<FrameChangeScores> s(1);
  s[0].score = {0.1, 0.25, 0.3};
  std::vector<RegionFeatures> f{{{vec2(3, 4), vec2(1, 0), vec2(0, 2)}, {1, 1, 1}}};
  const auto d = detect_regions(frames, Side::After, s, f, 0.2);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].label, 2);
  EXPECT_EQ(d[1].label, 3);
  EXPECT_EQ(d[1].score, 0.3);
  EXPECT_EQ(d[1].side, Side::After);
  EXPECT_NEAR(d[1].feature.norm(), 1.0, 1e-15);
  EXPECT_EQ(detect_regions(frames, Side::After, s, f, 0.25).size(), 1u);
  EXPECT_TRUE(detect_regions(frames, Side::After, s, f, 0.31).empty());
}

TEST(Association, IdenticalRegionsMergeIdempotently) {
  const auto cloud = line_cloud(8, 0.0);
  const auto f = vec2(0.6, 0.8);
  std::vector<DetectedRegion> rs{region(0, 1, f, &cloud, 0.4), region(1, 1, f, &cloud, 0.7)};
  const auto objs = associate(rs);
  ASSERT_EQ(objs.size(), 1u);
  EXPECT_EQ(objs[0].n_merged, 2);
  EXPECT_NEAR((objs[0].feature - f).norm(), 0.0, 1e-15);
  EXPECT_EQ(objs[0].confidence, 0.7);
  EXPECT_EQ(objs[0].cloud.size(), 16u);
  EXPECT_EQ(objs[0].members.size(), 2u);
}

TEST(Association, OrthogonalDisjointRegionsStaySeparate) {
  const auto a = line_cloud(5, 0.0), b = line_cloud(5, 5.0);
  std::vector<DetectedRegion> rs{region(0, 1, vec2(1, 0), &a), region(1, 4, vec2(0, 1), &b)};
  EXPECT_EQ(associate(rs).size(), 2u);
}

TEST(Association, MergeUsesRunningAverage) {
  // cos 0.8 plus 7 of 10 points near the object: S = 1.5 > 1.4.
  auto seed = line_cloud(10, 0.0, 1.0);
  PointCloud probe;
  for (int i = 0; i < 10; ++i) probe.points.emplace_back(i < 7 ? i + 0.1 : i + 0.5, 0.0, 0.0);
  std::vector<DetectedRegion> rs{region(0, 1, vec2(1, 0), &seed),
                                 region(2, 3, vec2(0.8, 0.6), &probe)};
  const auto objs = associate(rs);
  ASSERT_EQ(objs.size(), 1u);
  EXPECT_NEAR(objs[0].feature[0], 0.9, 1e-15);
  EXPECT_NEAR(objs[0].feature[1], 0.3, 1e-15);
  EXPECT_DOUBLE_EQ(geometric_overlap(probe, [&] {
                     ProximityIndex idx(0.02);
                     for (const auto& p : seed.points) idx.insert(p);
                     return idx;
                   }()),
                   0.7);
  // A stricter cutoff keeps them apart.
  EXPECT_EQ(associate(rs, {0.02, 1.5}).size(), 2u);
}

TEST(Association, FirstFrameRegionsAllSeedObjects) {
  const auto c = line_cloud(4, 0.0);
  std::vector<DetectedRegion> rs{region(3, 1, vec2(1, 0), &c), region(3, 2, vec2(1, 0), &c),
                                 region(5, 1, vec2(1, 0), &c)};
  const auto objs = associate(rs);
  ASSERT_EQ(objs.size(), 2u);
  EXPECT_EQ(objs[0].n_merged, 2);  // ties go to the earliest object
  EXPECT_EQ(objs[1].n_merged, 1);
  EXPECT_TRUE(associate({}).empty());
}

TEST(Association, ClassifyMovedAndUnmatched) {
  std::vector<ChangedObject> b{object_with(vec2(1, 0), 0)};
  std::vector<ChangedObject> a{object_with(vec2(1, 0), 1)};
  classify(b, a);
  EXPECT_EQ(b[0].change_type, ChangeType::Moved);
  EXPECT_EQ(a[0].change_type, ChangeType::Moved);
  EXPECT_EQ(b[0].moved_partner, 1);
  EXPECT_EQ(a[0].moved_partner, 0);

  std::vector<ChangedObject> b2{object_with(vec2(1, 0), 0)};
  std::vector<ChangedObject> a2{object_with(vec2(0.6, 0.8), 1)};
  classify(b2, a2);
  EXPECT_EQ(b2[0].change_type, ChangeType::Removed);
  EXPECT_EQ(a2[0].change_type, ChangeType::Added);
  EXPECT_FALSE(b2[0].moved_partner);
}

TEST(Association, ClassifyPartnersTheBestPair) {
  std::vector<ChangedObject> b{object_with(vec2(0.8, 0.6), 0), object_with(vec2(0.9, std::sqrt(0.19)), 1)};
  std::vector<ChangedObject> a{object_with(vec2(1, 0), 2)};
  classify(b, a);
  EXPECT_EQ(b[1].change_type, ChangeType::Moved);
  EXPECT_EQ(b[1].moved_partner, 2);
  EXPECT_EQ(b[0].change_type, ChangeType::Removed);
  EXPECT_EQ(a[0].moved_partner, 1);
}

TEST(Association, ClassifyMatchesExhaustiveGreedy) {
  // Oracle: repeatedly take the globally best remaining pair above tau.
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int nb = 1 + static_cast<int>(rng() % 3), na = 1 + static_cast<int>(rng() % 3);
    std::vector<ChangedObject> b, a;
    for (int i = 0; i < nb; ++i) b.push_back(object_with(Eigen::Vector3d(g(rng), g(rng), 1.5), i));
    for (int i = 0; i < na; ++i)
      a.push_back(object_with(Eigen::Vector3d(g(rng), g(rng), 1.5), nb + i));
    std::vector<int> partner_b(nb, -1);
    std::vector<bool> taken_a(na, false);
    while (true) {
      double best = 0.7;
      int bi = -1, ai = -1;
      for (int i = 0; i < nb; ++i)
        for (int j = 0; j < na; ++j) {
          if (partner_b[i] >= 0 || taken_a[j]) continue;
          const double c = cosine(b[i].feature, a[j].feature);
          if (c > best) best = c, bi = i, ai = j;
        }
      if (bi < 0) break;
      partner_b[bi] = nb + ai;
      taken_a[ai] = true;
    }
    classify(b, a);
    for (int i = 0; i < nb; ++i) {
      ASSERT_EQ(b[i].moved_partner.value_or(-1), partner_b[i]);
      ASSERT_EQ(b[i].change_type, partner_b[i] >= 0 ? ChangeType::Moved : ChangeType::Removed);
    }
    for (int j = 0; j < na; ++j)
      ASSERT_EQ(a[j].change_type, taken_a[j] ? ChangeType::Moved : ChangeType::Added);
  }
}

TEST(Association, CentroidsAndEmptyDetections) {
  Grid<std::int32_t> labels(60, 40, 0);
  for (int y = 40; y < 50; ++y)
    for (int x = 20; x < 30; ++x) labels(y, x) = 6;
  const auto c = region_centroids(RegionMap::from_labels(labels));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].x, 24.5);
  EXPECT_EQ(c[0].y, 44.5);
  EXPECT_EQ(c[0].count, 100);

  SequencePair pair;
  pair.scene_id = "empty";
  pair.before.push_back(labelled(2, 1, {1, 1}));
  pair.after.push_back(labelled(2, 1, {1, 1}));
  const auto set = emit_detections({}, {}, pair);
  EXPECT_EQ(set.scene_id, "empty");
  EXPECT_TRUE(set.objects.empty());
}

TEST(Association, TwoImageRegionsBecomeObjects) {
  const auto c = line_cloud(3, 0.0);
  std::vector<DetectedRegion> rs{region(0, 1, vec2(1, 0), &c, 0.3),
                                 region(0, 2, vec2(1, 0), &c, 0.6)};
  auto objs = regions_as_objects(rs);
  ASSERT_EQ(objs.size(), 2u);
  EXPECT_EQ(objs[1].confidence, 0.6);
  std::vector<ChangedObject> none;
  assign_object_ids(objs, none);
  EXPECT_EQ(objs[1].object_id, 1);
}
