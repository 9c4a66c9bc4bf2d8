#include "masscrf/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace masscrf {

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw UnreadableFileError("checkpoint: truncated record");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(v);
}

void put_str(std::string& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

std::string get_str(const std::string& buf, std::size_t& pos) {
  const auto len = get_le<std::uint32_t>(buf, pos);
  if (pos + len > buf.size()) throw UnreadableFileError("checkpoint: truncated string");
  std::string s = buf.substr(pos, len);
  pos += len;
  return s;
}

}  // namespace

const std::pair<Shape, Array>& Checkpoint::record(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw BadParamError("checkpoint lacks record '" + name + "'");
  return it->second;
}

Tensor Checkpoint::tensor(const std::string& name, bool requires_grad) const {
  const auto& [shape, values] = record(name);
  return Tensor::from_array(shape, values, requires_grad);
}

void Checkpoint::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size() + blobs.size()));
  for (const auto& [name, rec] : arrays) {
    put_str(out, name);
    out.push_back(0);  // dtype tag: f64 array
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rec.first.size()));
    for (Index d : rec.first) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    const auto bytes = static_cast<std::size_t>(rec.second.size()) * sizeof(double);
    const std::size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, rec.second.data(), bytes);
  }
  for (const auto& [name, blob] : blobs) {
    put_str(out, name);
    out.push_back(1);  // dtype tag: byte blob
    put_str(out, blob);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (buf.size() < sizeof kMagic || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
    throw UnreadableFileError(path + ": bad checkpoint magic");
  pos = sizeof kMagic;
  const auto version = get_le<std::uint32_t>(buf, pos);
  if (version != kVersion)
    throw UnreadableFileError(path + ": unsupported checkpoint version " +
                              std::to_string(version));
  const auto count = get_le<std::uint32_t>(buf, pos);
  Checkpoint ck;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string name = get_str(buf, pos);
    const auto tag = get_le<std::uint8_t>(buf, pos);
    if (tag == 0) {
      const auto ndim = get_le<std::uint32_t>(buf, pos);
      Shape shape(ndim);
      for (auto& d : shape) d = static_cast<Index>(get_le<std::uint64_t>(buf, pos));
      const Index n = shape_size(shape);
      const auto bytes = static_cast<std::size_t>(n) * sizeof(double);
      if (pos + bytes > buf.size()) throw UnreadableFileError(path + ": truncated payload");
      Array values(n);
      std::memcpy(values.data(), buf.data() + pos, bytes);
      pos += bytes;
      ck.arrays[name] = {std::move(shape), std::move(values)};
    } else if (tag == 1) {
      ck.blobs[name] = get_str(buf, pos);
    } else {
      throw UnreadableFileError(path + ": unknown dtype tag");
    }
  }
  return ck;
}

}  // namespace masscrf
