#pragma once

#include <optional>
#include <string>
#include <vector>

#include "masscrf/metrics.hpp"
#include "masscrf/ops.hpp"
#include "masscrf/rng.hpp"

namespace masscrf {

enum class Split { train, test };
enum class AugTag { orig, flipH, flipV, flipHV };

// One 40x40 sample: raw intensities in [0,1] plus the exact binary mask.
struct SegmentationSample {
  Tensor image;  // [1,1,40,40]
  Mask mask;     // 40x40, values {0,1}
  std::string id;
  AugTag tag = AugTag::orig;
};

// Per-pixel normalization maps, train-split derived (population std).
struct NormStats {
  Index h = 0, w = 0;
  Array mean, stddev;
};

struct SynthParams {
  int count = 0;
  std::uint64_t seed = 0;
  double contrast = 0.0;
  double noise_sigma = 0.0;
};

struct Dataset {
  std::vector<SegmentationSample> samples;
  Split split = Split::train;
  std::optional<NormStats> stats;
  std::optional<SynthParams> provenance;
};

struct PriorMap {
  Index h = 0, w = 0;
  Array values;  // empirical foreground probability per pixel
};

inline constexpr Index kImageSize = 40;

// Deterministic elliptical-blob generator: centroid within 8 px of center,
// foreground lifted by `contrast` over the background, Gaussian noise, [0,1].
Dataset synth_generate(int count, std::uint64_t seed, double contrast, double noise_sigma);

// Steps 1-4 of the pipeline: bilinear resize to 40x40, clip to the [p1,p99]
// percentiles, rescale to [0,1], 256-bin histogram equalization.
Array preprocess_base(const Array& raw, Index h, Index w);

// Full pipeline including step 5, (x - mean)/max(std, 1e-3).
Tensor preprocess(const Array& raw, Index h, Index w, const NormStats& stats);

// Per-pixel mean/std over base-processed train images.
NormStats compute_stats(const std::vector<Array>& base_images);

// Exactly 4x samples with tags orig/flipH/flipV/flipHV, masks flipped with
// the images; input must be a train split.
Dataset augment(const Dataset& train);

PriorMap estimate_prior(const Dataset& train);

// Pairs img_<id>.(pgm|png) with msk_<id>.(pgm|png); resizes off-grid inputs
// (bilinear image, nearest mask); samples sorted by id.
Dataset load_masks_dir(const std::string& path, Split split);

// Writes img/msk PGM pairs plus manifest.json (ids, split, generator params).
void write_dataset(const std::string& dir, const Dataset& data);

// What the trainer consumes: z-scored image tensors plus flat labels.
struct PreparedData {
  std::vector<Tensor> images;      // [1,1,40,40] each, normalized
  std::vector<LabelArray> labels;  // flat 1600, {0,1}
  std::vector<Mask> masks;
  std::vector<std::string> ids;
  NormStats stats;
};

// Train path: augment (optional), base-process, derive stats, normalize.
// Test path: pass the train stats; no augmentation.
PreparedData prepare(const Dataset& data, const NormStats* train_stats, bool do_augment);

Array flip_plane(const Array& v, Index h, Index w, bool horizontal, bool vertical);

}  // namespace masscrf
