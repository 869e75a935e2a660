#include <random>

#include <gtest/gtest.h>

#include "scenediff/pairing.hpp"
#include "scenediff/synth.hpp"

using namespace scenediff;

namespace {

bool covers_every_frame(const FramePairSet& s, int nb, int na) {
  for (int i = 0; i < nb; ++i)
    if (s.partners(Side::Before, i).empty()) return false;
  for (int j = 0; j < na; ++j)
    if (s.partners(Side::After, j).empty()) return false;
  return true;
}

CovisibilityMatrix random_matrix(std::mt19937_64& rng, int nb, int na) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CovisibilityMatrix m(nb, std::vector<double>(na));
  for (auto& row : m)
    for (auto& v : row) v = u(rng);
  return m;
}

}  // namespace

TEST(Pairing, SingleFramesAlwaysPair) {
  for (double c : {0.0, 0.2, 0.9}) {
    const auto s = select_pairs(CovisibilityMatrix{{c}}, 0.5);
    ASSERT_EQ(s.pairs.size(), 1u);
    EXPECT_EQ(s.pairs[0], (FramePair{0, 0, c}));
  }
}

TEST(Pairing, ThresholdKeepsEveryPartnerAbove) {
  // Before frame 1 covers after frame 2 so frame 0 keeps only its own picks.
  const CovisibilityMatrix m{{0.7, 0.6, 0.1}, {0.0, 0.0, 0.9}};
  const auto s = select_pairs(m, 0.5);
  EXPECT_EQ(s.partners(Side::Before, 0), (std::vector<int>{0, 1}));
  EXPECT_EQ(s.partners(Side::Before, 1), (std::vector<int>{2}));
}

TEST(Pairing, FallsBackToArgmax) {
  const CovisibilityMatrix m{{0.1, 0.2, 0.3}, {0.2, 0.4, 0.3}};
  const auto s = select_pairs(m, 0.5);
  EXPECT_EQ(s.partners(Side::Before, 0), (std::vector<int>{2}));
  // After frame 1's best is before 1; after 0's best is before 1 as well.
  EXPECT_EQ(s.partners(Side::After, 0), (std::vector<int>{1}));
  EXPECT_EQ(s.partners(Side::After, 2), (std::vector<int>{0}));
}

TEST(Pairing, ArgmaxTiesGoToLowestIndex) {
  const CovisibilityMatrix m{{0.3, 0.3, 0.3}};
  const auto s = select_pairs(m, 0.5);
  // Before 0 picks after 0; every after frame also needs a partner.
  EXPECT_EQ(s.partners(Side::Before, 0), (std::vector<int>{0, 1, 2}));
  const auto t = select_pairs(CovisibilityMatrix{{0.3}, {0.3}}, 0.5);
  EXPECT_EQ(t.partners(Side::After, 0), (std::vector<int>{0, 1}));
  const auto u = select_pairs(CovisibilityMatrix{{0.3, 0.3}, {0.3, 0.3}}, 0.5);
  ASSERT_EQ(u.pairs.size(), 3u);
  EXPECT_EQ(u.partners(Side::Before, 1), (std::vector<int>{0}));
  EXPECT_EQ(u.partners(Side::After, 1), (std::vector<int>{0}));
}

TEST(Pairing, CoverageAndMonotonicity) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int nb = 1 + static_cast<int>(rng() % 6), na = 1 + static_cast<int>(rng() % 6);
    const auto m = random_matrix(rng, nb, na);
    std::size_t last = std::numeric_limits<std::size_t>::max();
    for (double thr = 0.0; thr <= 1.0; thr += 0.05) {
      const auto s = select_pairs(m, thr);
      ASSERT_TRUE(covers_every_frame(s, nb, na));
      for (const auto& p : s.pairs) {
        ASSERT_GE(p.covisibility, 0.0);
        ASSERT_LE(p.covisibility, 1.0);
      }
      ASSERT_LE(s.pairs.size(), last);
      last = s.pairs.size();
    }
  }
}

TEST(Pairing, SyntheticSequenceIsCoveredForAnyWorkerCount) {
  auto scene = synth::stress_suite()[2].scene;
  scene.before_path.frames = 4;
  scene.after_path.frames = 3;
  const auto out = synth::generate(scene);
  const auto a = covisibility_matrix(out.pair, 1);
  const auto b = covisibility_matrix(out.pair, 4);
  EXPECT_EQ(a, b);
  const auto s = select_pairs(out.pair, 0.5, 3);
  EXPECT_TRUE(covers_every_frame(s, 4, 3));
}
