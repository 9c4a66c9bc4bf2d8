#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "masscrf/error.hpp"

namespace masscrf {

// Binary mask as row-major bytes in {0,1} over an h x w grid.
struct Mask {
  Eigen::Index h = 0, w = 0;
  std::vector<std::uint8_t> v;

  Eigen::Index size() const { return h * w; }
  std::uint8_t at(Eigen::Index y, Eigen::Index x) const { return v[static_cast<std::size_t>(y * w + x)]; }
};

struct ConfusionCounts {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
};

ConfusionCounts confusion(const Mask& pred, const Mask& gt);

// 2TP / (2TP + FP + FN); both-empty masks score 1.0.
double dice(const Mask& pred, const Mask& gt);
double dice_from_counts(const ConfusionCounts& c);

struct TrimapResult {
  double accuracy = 1.0;
  bool empty_band = false;
  long long band_pixels = 0;
  long long band_correct = 0;
};

// Boundary: gt pixels 8-adjacent to a differently labeled gt pixel. Band:
// Chebyshev dilation of the boundary by `width`. Accuracy is the fraction of
// band pixels where pred == gt; an empty band scores 1.0 with the flag set.
TrimapResult trimap_accuracy(const Mask& pred, const Mask& gt, int width);

// Band membership map (1 = in band) for oracle tests and reporting.
Mask trimap_band(const Mask& gt, int width);

struct McNemarResult {
  long long b = 0;  // a correct, b wrong
  long long c = 0;  // a wrong, b correct
  double chi2 = 0.0;
  double p_value = 1.0;
};

// Paired per-pixel McNemar chi-square, no continuity correction; p-value is
// the chi-square(1df) upper tail Q(1/2, chi2/2) = erfc(sqrt(chi2/2)).
McNemarResult mcnemar(const std::vector<std::uint8_t>& model_a_correct,
                      const std::vector<std::uint8_t>& model_b_correct);

}  // namespace masscrf
