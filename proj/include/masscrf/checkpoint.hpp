#pragma once

#include <map>
#include <string>

#include "masscrf/tensor.hpp"

namespace masscrf {

// Named-record container: little-endian file with magic "MASSCRF", version,
// and count-prefixed records of (name, dtype tag, shape, payload). Tag 0 is
// a raw f64 array, tag 1 an opaque byte blob (config text, rng state).
// std::map keys give a canonical record order, so save is deterministic.
struct Checkpoint {
  static constexpr char kMagic[8] = {'M', 'A', 'S', 'S', 'C', 'R', 'F', '\0'};
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::pair<Shape, Array>> arrays;
  std::map<std::string, std::string> blobs;

  void put(const std::string& name, const Tensor& t) {
    arrays[name] = {t.shape(), t.value()};
  }
  void put(const std::string& name, Shape shape, Array values) {
    arrays[name] = {std::move(shape), std::move(values)};
  }
  bool has(const std::string& name) const { return arrays.count(name) != 0; }
  const std::pair<Shape, Array>& record(const std::string& name) const;
  Tensor tensor(const std::string& name, bool requires_grad) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace masscrf
