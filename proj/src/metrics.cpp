#include "masscrf/metrics.hpp"

#include <cmath>
#include <string>

namespace masscrf {

namespace {

void require_same_shape(const Mask& a, const Mask& b, const char* who) {
  if (a.h != b.h || a.w != b.w || a.v.size() != static_cast<std::size_t>(a.size()) ||
      b.v.size() != static_cast<std::size_t>(b.size()))
    throw ShapeMismatchError(std::string(who) + ": mask shapes disagree");
}

}  // namespace

ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.v.size(); ++i) {
    if (gt.v[i]) {
      (pred.v[i] ? c.tp : c.fn)++;
    } else {
      (pred.v[i] ? c.fp : c.tn)++;
    }
  }
  return c;
}

double dice_from_counts(const ConfusionCounts& c) {
  const long long denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;  // both masks empty
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double dice(const Mask& pred, const Mask& gt) { return dice_from_counts(confusion(pred, gt)); }

Mask trimap_band(const Mask& gt, int width) {
  if (width < 1) throw BadParamError("trimap width must be >= 1");
  const Eigen::Index h = gt.h, w = gt.w;
  Mask boundary{h, w, std::vector<std::uint8_t>(gt.v.size(), 0)};
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const std::uint8_t me = gt.at(y, x);
      bool edge = false;
      for (Eigen::Index dy = -1; dy <= 1 && !edge; ++dy)
        for (Eigen::Index dx = -1; dx <= 1 && !edge; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const Eigen::Index ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          if (gt.at(ny, nx) != me) edge = true;
        }
      if (edge) boundary.v[static_cast<std::size_t>(y * w + x)] = 1;
    }

  Mask band{h, w, std::vector<std::uint8_t>(gt.v.size(), 0)};
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      if (!boundary.at(y, x)) continue;
      for (Eigen::Index ny = std::max<Eigen::Index>(0, y - width);
           ny <= std::min<Eigen::Index>(h - 1, y + width); ++ny)
        for (Eigen::Index nx = std::max<Eigen::Index>(0, x - width);
             nx <= std::min<Eigen::Index>(w - 1, x + width); ++nx)
          band.v[static_cast<std::size_t>(ny * w + nx)] = 1;
    }
  return band;
}

TrimapResult trimap_accuracy(const Mask& pred, const Mask& gt, int width) {
  require_same_shape(pred, gt, "trimap_accuracy");
  Mask band = trimap_band(gt, width);
  TrimapResult r;
  for (std::size_t i = 0; i < band.v.size(); ++i) {
    if (!band.v[i]) continue;
    r.band_pixels++;
    if (pred.v[i] == gt.v[i]) r.band_correct++;
  }
  if (r.band_pixels == 0) {
    r.empty_band = true;  // uniform groundtruth has no boundary
    r.accuracy = 1.0;
  } else {
    r.accuracy = static_cast<double>(r.band_correct) / static_cast<double>(r.band_pixels);
  }
  return r;
}

McNemarResult mcnemar(const std::vector<std::uint8_t>& model_a_correct,
                      const std::vector<std::uint8_t>& model_b_correct) {
  if (model_a_correct.size() != model_b_correct.size())
    throw LengthMismatchError("mcnemar: correctness vectors differ in length");
  McNemarResult r;
  for (std::size_t i = 0; i < model_a_correct.size(); ++i) {
    const bool a = model_a_correct[i] != 0, b = model_b_correct[i] != 0;
    if (a && !b) r.b++;
    if (!a && b) r.c++;
  }
  if (r.b + r.c == 0)
    throw NoDiscordantPairsError("mcnemar: models agree on every pixel");
  const double d = static_cast<double>(r.b - r.c);
  r.chi2 = d * d / static_cast<double>(r.b + r.c);
  r.p_value = std::erfc(std::sqrt(r.chi2 / 2.0));
  return r;
}

}  // namespace masscrf
