#pragma once

#include <filesystem>
#include <string>

#include "masscrf/metrics.hpp"
#include "masscrf/rng.hpp"
#include "masscrf/tensor.hpp"

namespace testsup {

// Unique scratch directory, removed on scope exit.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("masscrf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str(const std::string& sub = "") const {
    return sub.empty() ? path.string() : (path / sub).string();
  }
};

inline masscrf::Tensor random_tensor(masscrf::Shape shape, masscrf::Rng& rng, double lo = -1.0,
                                     double hi = 1.0, bool requires_grad = false) {
  masscrf::Tensor t = masscrf::Tensor::zeros(shape, requires_grad);
  for (masscrf::Index i = 0; i < t.size(); ++i) t.mutable_value()[i] = rng.uniform(lo, hi);
  return t;
}

inline masscrf::Mask random_mask(masscrf::Index h, masscrf::Index w, masscrf::Rng& rng,
                                 double p_fg = 0.5) {
  masscrf::Mask m;
  m.h = h;
  m.w = w;
  m.v.resize(static_cast<std::size_t>(h * w));
  for (auto& px : m.v) px = rng.uniform01() < p_fg ? 1 : 0;
  return m;
}

inline double max_abs_diff(const masscrf::Array& a, const masscrf::Array& b) {
  return (a - b).abs().maxCoeff();
}

}  // namespace testsup
