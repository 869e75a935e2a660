#pragma once

#include <algorithm>
#include <vector>

#include "scenediff/geometry.hpp"
#include "scenediff/parallel.hpp"

namespace scenediff {

struct FramePair {
  int before = 0;
  int after = 0;
  double covisibility = 0.0;
  friend bool operator==(const FramePair&, const FramePair&) = default;
};

struct FramePairSet {
  std::vector<FramePair> pairs;  // sorted by (before, after), unique

  std::vector<int> partners(Side side, int index) const {
    std::vector<int> out;
    for (const auto& p : pairs) {
      if (side == Side::Before && p.before == index) out.push_back(p.after);
      if (side == Side::After && p.after == index) out.push_back(p.before);
    }
    return out;
  }
};

// covis[i][j]: before frame i vs after frame j.
using CovisibilityMatrix = std::vector<std::vector<double>>;

inline CovisibilityMatrix covisibility_matrix(const SequencePair& pair, int workers = 1) {
  const std::size_t nb = pair.before.size(), na = pair.after.size();
  CovisibilityMatrix m(nb, std::vector<double>(na, 0.0));
  parallel_for(nb * na, workers, [&](std::size_t k) {
    const std::size_t i = k / na, j = k % na;
    m[i][j] = covisibility(pair.before[i], pair.after[j]);
  });
  return m;
}

// Keeps every pair above `threshold`; a frame with none keeps its single best
// partner (lowest index on ties). Applied from both sides and unioned so that
// every before and every after frame is covered.
inline FramePairSet select_pairs(const CovisibilityMatrix& covis, double threshold = 0.5) {
  const int nb = static_cast<int>(covis.size());
  const int na = nb == 0 ? 0 : static_cast<int>(covis.front().size());
  std::vector<std::vector<bool>> keep(nb, std::vector<bool>(na, false));
  for (int i = 0; i < nb; ++i) {
    bool any = false;
    int best = 0;
    for (int j = 0; j < na; ++j) {
      if (covis[i][j] > threshold) keep[i][j] = any = true;
      if (covis[i][j] > covis[i][best]) best = j;
    }
    if (!any && na > 0) keep[i][best] = true;
  }
  for (int j = 0; j < na; ++j) {
    bool any = false;
    int best = 0;
    for (int i = 0; i < nb; ++i) {
      if (covis[i][j] > threshold) any = true;
      if (covis[i][j] > covis[best][j]) best = i;
    }
    if (!any && nb > 0) keep[best][j] = true;
  }
  FramePairSet set;
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < na; ++j)
      if (keep[i][j]) set.pairs.push_back({i, j, covis[i][j]});
  return set;
}

inline FramePairSet select_pairs(const SequencePair& pair, double threshold = 0.5,
                                 int workers = 1) {
  return select_pairs(covisibility_matrix(pair, workers), threshold);
}

}  // namespace scenediff
