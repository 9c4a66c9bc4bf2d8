#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "masscrf/metrics.hpp"
#include "masscrf/tensor.hpp"

namespace masscrf {

// Raw grayscale pixels as stored on disk; maxval 255 or 65535 (or 1 for
// already-binary PGM masks).
struct GrayImage {
  Index h = 0, w = 0;
  std::uint32_t maxval = 255;
  std::vector<std::uint32_t> px;

  Array to_unit() const;  // px / maxval
  static GrayImage from_unit(const Array& v, Index h, Index w, std::uint32_t maxval);
};

// Reads PGM (P5) or PNG grayscale, dispatching on magic bytes.
GrayImage read_gray(const std::string& path);

void write_pgm(const std::string& path, const GrayImage& img);
void write_png_gray(const std::string& path, const GrayImage& img);

// 8-bit RGB overlay: base intensities in [0,1], groundtruth contour red,
// prediction contour green (overlap yellow).
void write_contour_png(const std::string& path, const Array& base, const Mask& gt,
                       const Mask& pred);

}  // namespace masscrf
