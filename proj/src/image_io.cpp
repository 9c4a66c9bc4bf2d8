#include "masscrf/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace masscrf {

Array GrayImage::to_unit() const {
  Array out(static_cast<Index>(px.size()));
  const double inv = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < px.size(); ++i) out[static_cast<Index>(i)] = px[i] * inv;
  return out;
}

GrayImage GrayImage::from_unit(const Array& v, Index h, Index w, std::uint32_t maxval) {
  if (v.size() != h * w) throw ShapeMismatchError("from_unit: pixel count mismatch");
  GrayImage img;
  img.h = h;
  img.w = w;
  img.maxval = maxval;
  img.px.resize(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) {
    double x = std::min(1.0, std::max(0.0, v[i]));
    img.px[static_cast<std::size_t>(i)] =
        static_cast<std::uint32_t>(std::lround(x * static_cast<double>(maxval)));
  }
  return img;
}

namespace {

int pgm_token(std::istream& in) {
  // Skips whitespace and '#' comments, then parses one nonnegative integer.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) return -1;
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFileError("cannot open " + path);
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5')
    throw UnreadableFileError(path + ": not a P5 PGM file");
  const int w = pgm_token(in), h = pgm_token(in), maxval = pgm_token(in);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw UnreadableFileError(path + ": malformed PGM header");
  // The header terminator was already consumed by the maxval parse.
  GrayImage img;
  img.h = h;
  img.w = w;
  img.maxval = static_cast<std::uint32_t>(maxval);
  img.px.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  const bool wide = maxval > 255;
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * (wide ? 2 : 1));
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw UnreadableFileError(path + ": truncated pixel data");
    for (int x = 0; x < w; ++x) {
      std::uint32_t v = wide ? (static_cast<std::uint32_t>(row[2 * x]) << 8) | row[2 * x + 1]
                             : row[static_cast<std::size_t>(x)];
      if (v > img.maxval) throw UnreadableFileError(path + ": sample exceeds maxval");
      img.px[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  return img;
}

struct PngCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

GrayImage read_png(const std::string& path) {
  std::unique_ptr<std::FILE, PngCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw UnreadableFileError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnreadableFileError(path + ": libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnreadableFileError(path + ": png decode error");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnreadableFileError(path + ": expected grayscale PNG");
  }
  if (depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    depth = 8;
  }
  png_read_update_info(png, info);

  GrayImage img;
  img.h = static_cast<Index>(png_get_image_height(png, info));
  img.w = static_cast<Index>(png_get_image_width(png, info));
  img.maxval = depth == 16 ? 65535u : 255u;
  img.px.resize(static_cast<std::size_t>(img.h) * static_cast<std::size_t>(img.w));
  std::vector<unsigned char> row(png_get_rowbytes(png, info));
  for (Index y = 0; y < img.h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (Index x = 0; x < img.w; ++x) {
      std::uint32_t v = depth == 16
                            ? (static_cast<std::uint32_t>(row[2 * x]) << 8) | row[2 * x + 1]
                            : row[static_cast<std::size_t>(x)];
      img.px[static_cast<std::size_t>(y * img.w + x)] = v;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

GrayImage read_gray(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw UnreadableFileError("cannot open " + path);
  unsigned char sig[8] = {0};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (sig[0] == 'P' && sig[1] == '5') return read_pgm(path);
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  throw UnreadableFileError(path + ": unrecognized image format");
}

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << img.w << " " << img.h << "\n" << img.maxval << "\n";
  const bool wide = img.maxval > 255;
  std::vector<unsigned char> row(static_cast<std::size_t>(img.w) * (wide ? 2 : 1));
  for (Index y = 0; y < img.h; ++y) {
    for (Index x = 0; x < img.w; ++x) {
      const std::uint32_t v = img.px[static_cast<std::size_t>(y * img.w + x)];
      if (wide) {
        row[2 * x] = static_cast<unsigned char>(v >> 8);
        row[2 * x + 1] = static_cast<unsigned char>(v & 0xff);
      } else {
        row[static_cast<std::size_t>(x)] = static_cast<unsigned char>(v);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("failed writing " + path);
}

namespace {

void write_png_impl(const std::string& path, Index h, Index w, int color_type, int depth,
                    const std::vector<unsigned char>& rows_flat, std::size_t rowbytes) {
  std::unique_ptr<std::FILE, PngCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path + ": libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path + ": png encode error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(rows_flat.data() + static_cast<std::size_t>(y) * rowbytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::string& path, const GrayImage& img) {
  const bool wide = img.maxval > 255;
  const std::size_t rowbytes = static_cast<std::size_t>(img.w) * (wide ? 2 : 1);
  std::vector<unsigned char> rows(rowbytes * static_cast<std::size_t>(img.h));
  for (Index y = 0; y < img.h; ++y)
    for (Index x = 0; x < img.w; ++x) {
      const std::uint32_t v = img.px[static_cast<std::size_t>(y * img.w + x)];
      unsigned char* dst = rows.data() + static_cast<std::size_t>(y) * rowbytes;
      if (wide) {
        dst[2 * x] = static_cast<unsigned char>(v >> 8);
        dst[2 * x + 1] = static_cast<unsigned char>(v & 0xff);
      } else {
        dst[x] = static_cast<unsigned char>(v);
      }
    }
  write_png_impl(path, img.h, img.w, PNG_COLOR_TYPE_GRAY, wide ? 16 : 8, rows, rowbytes);
}

namespace {

// Contour = mask pixels 8-adjacent to a pixel of the other value.
std::vector<std::uint8_t> mask_contour(const Mask& m) {
  std::vector<std::uint8_t> edge(m.v.size(), 0);
  for (Index y = 0; y < m.h; ++y)
    for (Index x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      bool boundary = false;
      for (Index dy = -1; dy <= 1 && !boundary; ++dy)
        for (Index dx = -1; dx <= 1 && !boundary; ++dx) {
          const Index ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w) continue;
          if (!m.at(ny, nx)) boundary = true;
        }
      if (boundary) edge[static_cast<std::size_t>(y * m.w + x)] = 1;
    }
  return edge;
}

}  // namespace

void write_contour_png(const std::string& path, const Array& base, const Mask& gt,
                       const Mask& pred) {
  if (base.size() != gt.size() || gt.h != pred.h || gt.w != pred.w)
    throw ShapeMismatchError("write_contour_png: shapes disagree");
  const Index h = gt.h, w = gt.w;
  const double lo = base.minCoeff(), hi = base.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<std::uint8_t> gt_edge = mask_contour(gt), pr_edge = mask_contour(pred);
  const std::size_t rowbytes = static_cast<std::size_t>(w) * 3;
  std::vector<unsigned char> rows(rowbytes * static_cast<std::size_t>(h));
  for (Index i = 0; i < h * w; ++i) {
    const unsigned char gray =
        static_cast<unsigned char>(std::lround((base[i] - lo) / span * 255.0));
    unsigned char r = gray, g = gray, b = gray;
    if (gt_edge[static_cast<std::size_t>(i)]) {
      r = 255;
      g = 0;
      b = 0;
    }
    if (pr_edge[static_cast<std::size_t>(i)]) {
      g = 255;
      b = 0;
      if (!gt_edge[static_cast<std::size_t>(i)]) r = 0;
    }
    rows[static_cast<std::size_t>(i) * 3 + 0] = r;
    rows[static_cast<std::size_t>(i) * 3 + 1] = g;
    rows[static_cast<std::size_t>(i) * 3 + 2] = b;
  }
  write_png_impl(path, h, w, PNG_COLOR_TYPE_RGB, 8, rows, rowbytes);
}

}  // namespace masscrf
