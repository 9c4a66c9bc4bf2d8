#include "masscrf/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>

#include "masscrf/image_io.hpp"

namespace fs = std::filesystem;

namespace masscrf {

namespace {

constexpr Index S = kImageSize;

struct Ellipse {
  double cy, cx, a, b, theta;
  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double u = dx * std::cos(theta) + dy * std::sin(theta);
    const double v = -dx * std::sin(theta) + dy * std::cos(theta);
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

Mask blob_mask(Rng& rng) {
  // Union of a primary ellipse near the center and 0-2 satellites; retry
  // until the centroid lands within 8 px of the image center.
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<Ellipse> parts;
    const double cy = S / 2.0 + (rng.uniform01() * 2.0 - 1.0) * 5.0;
    const double cx = S / 2.0 + (rng.uniform01() * 2.0 - 1.0) * 5.0;
    parts.push_back({cy, cx, 6.0 + rng.uniform01() * 6.0, 6.0 + rng.uniform01() * 6.0,
                     rng.uniform01() * M_PI});
    const int extra = static_cast<int>(rng.uniform_int(3));
    for (int e = 0; e < extra; ++e) {
      const double oy = (rng.uniform01() * 2.0 - 1.0) * 6.0;
      const double ox = (rng.uniform01() * 2.0 - 1.0) * 6.0;
      parts.push_back({cy + oy, cx + ox, 3.0 + rng.uniform01() * 4.0,
                       3.0 + rng.uniform01() * 4.0, rng.uniform01() * M_PI});
    }
    Mask m{S, S, std::vector<std::uint8_t>(static_cast<std::size_t>(S * S), 0)};
    double sy = 0.0, sx = 0.0;
    long long n = 0;
    for (Index y = 0; y < S; ++y)
      for (Index x = 0; x < S; ++x)
        for (const Ellipse& el : parts)
          if (el.contains(static_cast<double>(y), static_cast<double>(x))) {
            m.v[static_cast<std::size_t>(y * S + x)] = 1;
            sy += y;
            sx += x;
            ++n;
            break;
          }
    if (n == 0) continue;
    const double dy = sy / static_cast<double>(n) - (S - 1) / 2.0;
    const double dx = sx / static_cast<double>(n) - (S - 1) / 2.0;
    if (std::sqrt(dy * dy + dx * dx) <= 8.0) return m;
  }
  throw BadParamError("synth blob generation failed to center after 64 attempts");
}

std::string aug_suffix(AugTag tag) {
  switch (tag) {
    case AugTag::orig: return "";
    case AugTag::flipH: return "_fh";
    case AugTag::flipV: return "_fv";
    case AugTag::flipHV: return "_fhv";
  }
  return "";
}

}  // namespace

Dataset synth_generate(int count, std::uint64_t seed, double contrast, double noise_sigma) {
  if (count < 1) throw BadParamError("synth_generate: count must be >= 1");
  if (!(contrast > 0.0 && contrast <= 1.0))
    throw BadParamError("synth_generate: contrast must lie in (0,1]");
  if (noise_sigma < 0.0) throw BadParamError("synth_generate: noise_sigma must be >= 0");

  Dataset data;
  data.split = Split::train;
  data.provenance = SynthParams{count, seed, contrast, noise_sigma};
  data.samples.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n)));
    Mask mask = blob_mask(rng);
    const double bg = 0.2 + rng.uniform01() * 0.2;
    const double fg = std::min(1.0, bg + contrast);
    Array img(S * S);
    for (Index i = 0; i < S * S; ++i)
      img[i] = mask.v[static_cast<std::size_t>(i)] ? fg : bg;
    if (noise_sigma > 0.0)
      for (Index i = 0; i < S * S; ++i) img[i] += rng.normal(0.0, noise_sigma);
    img = img.min(1.0).max(0.0);

    SegmentationSample s;
    s.image = Tensor::from_array({1, 1, S, S}, std::move(img));
    s.mask = std::move(mask);
    char id[32];
    std::snprintf(id, sizeof id, "%05d", n);
    s.id = id;
    data.samples.push_back(std::move(s));
  }
  return data;
}

namespace {

Array bilinear_resize(const Array& src, Index h, Index w, Index oh, Index ow) {
  if (h == oh && w == ow) return src;
  Array out(oh * ow);
  const double sy = oh > 1 ? static_cast<double>(h - 1) / static_cast<double>(oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(w - 1) / static_cast<double>(ow - 1) : 0.0;
  for (Index y = 0; y < oh; ++y)
    for (Index x = 0; x < ow; ++x) {
      const double fy = y * sy, fx = x * sx;
      const Index y0 = static_cast<Index>(fy), x0 = static_cast<Index>(fx);
      const Index y1 = std::min(h - 1, y0 + 1), x1 = std::min(w - 1, x0 + 1);
      const double ty = fy - y0, tx = fx - x0;
      const double top = src[y0 * w + x0] * (1 - tx) + src[y0 * w + x1] * tx;
      const double bot = src[y1 * w + x0] * (1 - tx) + src[y1 * w + x1] * tx;
      out[y * ow + x] = top * (1 - ty) + bot * ty;
    }
  return out;
}

double percentile(std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(sorted.size() - 1, lo + 1);
  const double t = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - t) + sorted[hi] * t;
}

}  // namespace

Array preprocess_base(const Array& raw, Index h, Index w) {
  if (h < 1 || w < 1 || raw.size() != h * w)
    throw EmptyImageError("preprocess: empty or mis-sized raw image");
  Array img = bilinear_resize(raw, h, w, S, S);

  std::vector<double> sorted(img.data(), img.data() + img.size());
  std::sort(sorted.begin(), sorted.end());
  const double p1 = percentile(sorted, 0.01), p99 = percentile(sorted, 0.99);
  if (!(p99 > p1)) throw DegenerateRangeError("preprocess: p1 == p99 (flat image)");
  img = (img.min(p99).max(p1) - p1) / (p99 - p1);

  // Histogram equalization over 256 bins.
  int hist[256] = {0};
  for (Index i = 0; i < img.size(); ++i)
    hist[std::min(255, static_cast<int>(img[i] * 256.0))]++;
  double cdf[256];
  double acc = 0.0;
  const double inv_n = 1.0 / static_cast<double>(img.size());
  for (int b = 0; b < 256; ++b) {
    acc += hist[b] * inv_n;
    cdf[b] = acc;
  }
  double cdf_min = 0.0;
  for (int b = 0; b < 256; ++b)
    if (hist[b] > 0) {
      cdf_min = cdf[b];
      break;
    }
  const double denom = 1.0 - cdf_min;
  for (Index i = 0; i < img.size(); ++i) {
    const int b = std::min(255, static_cast<int>(img[i] * 256.0));
    img[i] = denom > 0.0 ? (cdf[b] - cdf_min) / denom : 0.0;
  }
  return img;
}

Tensor preprocess(const Array& raw, Index h, Index w, const NormStats& stats) {
  if (stats.h != S || stats.w != S || stats.mean.size() != S * S ||
      stats.stddev.size() != S * S)
    throw ShapeMismatchError("preprocess: stats maps must be 40x40");
  Array base = preprocess_base(raw, h, w);
  Array z = (base - stats.mean) / stats.stddev.max(1e-3);
  return Tensor::from_array({1, 1, S, S}, std::move(z));
}

NormStats compute_stats(const std::vector<Array>& base_images) {
  if (base_images.empty()) throw EmptyDatasetError("compute_stats: no images");
  NormStats st;
  st.h = S;
  st.w = S;
  st.mean = Array::Zero(S * S);
  for (const Array& img : base_images) st.mean += img;
  st.mean /= static_cast<double>(base_images.size());
  Array var = Array::Zero(S * S);
  for (const Array& img : base_images) var += (img - st.mean).square();
  var /= static_cast<double>(base_images.size());
  st.stddev = var.sqrt();
  return st;
}

Array flip_plane(const Array& v, Index h, Index w, bool horizontal, bool vertical) {
  Array out(v.size());
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const Index sy = vertical ? h - 1 - y : y;
      const Index sx = horizontal ? w - 1 - x : x;
      out[y * w + x] = v[sy * w + sx];
    }
  return out;
}

namespace {

SegmentationSample flip_sample(const SegmentationSample& s, AugTag tag) {
  const bool fh = tag == AugTag::flipH || tag == AugTag::flipHV;
  const bool fv = tag == AugTag::flipV || tag == AugTag::flipHV;
  SegmentationSample out;
  out.id = s.id;
  out.tag = tag;
  out.image = Tensor::from_array({1, 1, S, S}, flip_plane(s.image.value(), S, S, fh, fv));
  out.mask = Mask{S, S, std::vector<std::uint8_t>(s.mask.v.size())};
  for (Index y = 0; y < S; ++y)
    for (Index x = 0; x < S; ++x) {
      const Index sy = fv ? S - 1 - y : y;
      const Index sx = fh ? S - 1 - x : x;
      out.mask.v[static_cast<std::size_t>(y * S + x)] = s.mask.at(sy, sx);
    }
  return out;
}

}  // namespace

Dataset augment(const Dataset& train) {
  if (train.split != Split::train)
    throw NotTrainSplitError("augment applies to the train split only");
  Dataset out;
  out.split = Split::train;
  out.provenance = train.provenance;
  out.samples.reserve(train.samples.size() * 4);
  for (const SegmentationSample& s : train.samples) {
    for (AugTag tag : {AugTag::orig, AugTag::flipH, AugTag::flipV, AugTag::flipHV})
      out.samples.push_back(tag == AugTag::orig ? s : flip_sample(s, tag));
  }
  return out;
}

PriorMap estimate_prior(const Dataset& train) {
  if (train.samples.empty()) throw EmptyDatasetError("estimate_prior: empty dataset");
  PriorMap prior;
  prior.h = S;
  prior.w = S;
  prior.values = Array::Zero(S * S);
  for (const SegmentationSample& s : train.samples)
    for (Index i = 0; i < S * S; ++i)
      prior.values[i] += s.mask.v[static_cast<std::size_t>(i)];
  prior.values /= static_cast<double>(train.samples.size());
  return prior;
}

namespace {

Mask mask_from_gray(const GrayImage& g, const std::string& path) {
  Mask m{g.h, g.w, std::vector<std::uint8_t>(g.px.size())};
  for (std::size_t i = 0; i < g.px.size(); ++i) {
    if (g.px[i] == 0) {
      m.v[i] = 0;
    } else if (g.px[i] == g.maxval) {
      m.v[i] = 1;
    } else {
      throw NonBinaryMaskError(path + ": mask value " + std::to_string(g.px[i]) +
                               " is neither 0 nor " + std::to_string(g.maxval));
    }
  }
  return m;
}

Mask nearest_resize_mask(const Mask& m, Index oh, Index ow) {
  if (m.h == oh && m.w == ow) return m;
  Mask out{oh, ow, std::vector<std::uint8_t>(static_cast<std::size_t>(oh * ow))};
  for (Index y = 0; y < oh; ++y)
    for (Index x = 0; x < ow; ++x) {
      const Index sy = std::min<Index>(m.h - 1, (y * m.h + oh / 2) / oh);
      const Index sx = std::min<Index>(m.w - 1, (x * m.w + ow / 2) / ow);
      out.v[static_cast<std::size_t>(y * ow + x)] = m.at(sy, sx);
    }
  return out;
}

}  // namespace

Dataset load_masks_dir(const std::string& path, Split split) {
  if (!fs::is_directory(path)) throw UnreadableFileError(path + " is not a directory");
  std::map<std::string, std::pair<std::string, std::string>> pairs;  // id -> (img, msk)
  for (const auto& entry : fs::directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    const std::string stem = entry.path().stem().string();
    const std::string ext = entry.path().extension().string();
    if (ext != ".pgm" && ext != ".png") continue;
    if (stem.rfind("img_", 0) == 0)
      pairs[stem.substr(4)].first = entry.path().string();
    else if (stem.rfind("msk_", 0) == 0)
      pairs[stem.substr(4)].second = entry.path().string();
  }
  if (pairs.empty()) throw EmptyDatasetError(path + ": no img_*/msk_* files found");

  Dataset data;
  data.split = split;
  for (const auto& [id, files] : pairs) {  // std::map iterates sorted by id
    if (files.first.empty() || files.second.empty())
      throw MissingPairError("sample '" + id + "' lacks its " +
                             (files.first.empty() ? "image" : "mask") + " file");
    GrayImage img = read_gray(files.first);
    GrayImage msk = read_gray(files.second);
    if (img.h < 1 || img.w < 1) throw EmptyImageError(files.first + ": empty image");

    SegmentationSample s;
    s.id = id;
    s.image = Tensor::from_array({1, 1, S, S}, bilinear_resize(img.to_unit(), img.h, img.w, S, S));
    s.mask = nearest_resize_mask(mask_from_gray(msk, files.second), S, S);
    data.samples.push_back(std::move(s));
  }
  return data;
}

void write_dataset(const std::string& dir, const Dataset& data) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
  nlohmann::json manifest;
  manifest["split"] = data.split == Split::train ? "train" : "test";
  manifest["ids"] = nlohmann::json::array();
  for (const SegmentationSample& s : data.samples) {
    const std::string id = s.id + aug_suffix(s.tag);
    manifest["ids"].push_back(id);
    write_pgm(dir + "/img_" + id + ".pgm",
              GrayImage::from_unit(s.image.value(), S, S, 65535));
    GrayImage m;
    m.h = S;
    m.w = S;
    m.maxval = 255;
    m.px.resize(s.mask.v.size());
    for (std::size_t i = 0; i < s.mask.v.size(); ++i) m.px[i] = s.mask.v[i] ? 255 : 0;
    write_pgm(dir + "/msk_" + id + ".pgm", m);
  }
  if (data.provenance) {
    manifest["generator"] = {{"count", data.provenance->count},
                             {"seed", data.provenance->seed},
                             {"contrast", data.provenance->contrast},
                             {"noise_sigma", data.provenance->noise_sigma}};
  }
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

PreparedData prepare(const Dataset& data, const NormStats* train_stats, bool do_augment) {
  const Dataset* src = &data;
  Dataset augmented;
  if (do_augment) {
    augmented = augment(data);
    src = &augmented;
  }
  if (src->samples.empty()) throw EmptyDatasetError("prepare: empty dataset");

  std::vector<Array> base;
  base.reserve(src->samples.size());
  for (const SegmentationSample& s : src->samples)
    base.push_back(preprocess_base(s.image.value(), S, S));

  PreparedData out;
  out.stats = train_stats ? *train_stats : compute_stats(base);
  const Array floored = out.stats.stddev.max(1e-3);
  for (std::size_t n = 0; n < base.size(); ++n) {
    out.images.push_back(
        Tensor::from_array({1, 1, S, S}, (base[n] - out.stats.mean) / floored));
    const Mask& m = src->samples[n].mask;
    LabelArray labels(S * S);
    for (Index i = 0; i < S * S; ++i) labels[i] = m.v[static_cast<std::size_t>(i)];
    out.labels.push_back(std::move(labels));
    out.masks.push_back(m);
    out.ids.push_back(src->samples[n].id + aug_suffix(src->samples[n].tag));
  }
  return out;
}

}  // namespace masscrf
