#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "scenediff/error.hpp"

namespace scenediff {

struct KapurResult {
  double threshold = 0.0;
  int bin = -1;             // last background bin, -1 when degenerate
  double entropy = 0.0;     // maximised H_background + H_foreground
  bool degenerate = false;  // all scores equal
};

// Two candidate entropy sums closer than this are treated as tied.
inline constexpr double kEntropyTieTolerance = 1e-12;

namespace detail {

// Bins are half-open on the left, (edge_i, edge_{i+1}], with the minimum
// folded into bin 0, so "x > threshold" selects exactly the foreground bins.
inline int kapur_bin(double x, double lo, double width, int bins) {
  const int b = static_cast<int>(std::ceil((x - lo) / width)) - 1;
  return std::clamp(b, 0, bins - 1);
}

// Shannon entropy of a sub-histogram given its total count and sum c*ln(c).
inline double sub_entropy(double total, double c_log_c) {
  if (total <= 0.0) return 0.0;
  return std::log(total) - c_log_c / total;
}

}  // namespace detail

// Maximum-entropy (Kapur) threshold over a `bins`-bin histogram spanning
// [min, max] of the scores. Candidates are the bin edges that leave both
// classes non-empty; ties go to the lowest edge.
inline KapurResult kapur_threshold(std::span<const double> scores, int bins = 256) {
  if (scores.empty()) throw Error(ErrorCode::MalformedInput, "kapur_threshold needs scores");
  if (bins < 2) throw Error(ErrorCode::InvalidConfig, "kapur_threshold needs >= 2 bins");
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return {lo, -1, 0.0, true};

  const double width = (hi - lo) / bins;
  std::vector<double> hist(bins, 0.0);
  for (double s : scores) hist[detail::kapur_bin(s, lo, width, bins)] += 1.0;

  // Prefix sums of counts and c*ln(c); suffix values come from the same sums
  // taken from the other end to avoid cancellation.
  std::vector<double> n_lo(bins), cl_lo(bins), n_hi(bins + 1, 0.0), cl_hi(bins + 1, 0.0);
  double n = 0.0, cl = 0.0;
  for (int i = 0; i < bins; ++i) {
    n += hist[i];
    cl += hist[i] > 0.0 ? hist[i] * std::log(hist[i]) : 0.0;
    n_lo[i] = n;
    cl_lo[i] = cl;
  }
  for (int i = bins - 1; i >= 0; --i) {
    n_hi[i] = n_hi[i + 1] + hist[i];
    cl_hi[i] = cl_hi[i + 1] + (hist[i] > 0.0 ? hist[i] * std::log(hist[i]) : 0.0);
  }

  KapurResult best;
  best.entropy = -1.0;
  for (int k = 0; k + 1 < bins; ++k) {
    if (n_lo[k] <= 0.0 || n_hi[k + 1] <= 0.0) continue;
    const double h = detail::sub_entropy(n_lo[k], cl_lo[k]) +
                     detail::sub_entropy(n_hi[k + 1], cl_hi[k + 1]);
    if (h > best.entropy + kEntropyTieTolerance) {
      best.entropy = h;
      best.bin = k;
    }
  }
  best.threshold = lo + (best.bin + 1) * width;
  return best;
}

}  // namespace scenediff
