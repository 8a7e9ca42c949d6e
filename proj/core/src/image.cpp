// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include "nlrc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace nlrc {

namespace {

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw std::runtime_error(what + ": " + path);
}

// PPM headers are ASCII tokens separated by whitespace; '#' starts a
// comment running to end of line.
int next_ppm_token(std::istream& in, const std::string& path) {
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      break;
    }
  }
  if (c == EOF) fail("truncated ppm header", path);
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > 1 << 30) fail("ppm header value out of range", path);
    any = true;
    c = in.get();
  }
  if (!any) fail("malformed ppm header", path);
  return value;
}

Image load_ppm(std::ifstream& in, const std::string& path) {
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') fail("malformed ppm header", path);
  const int w = next_ppm_token(in, path);
  const int h = next_ppm_token(in, path);
  const int maxval = next_ppm_token(in, path);
  if (w <= 0 || h <= 0) fail("invalid ppm dimensions", path);
  if (maxval != 255) fail("unsupported ppm bit depth (maxval != 255)", path);
  // The token reader consumed exactly one whitespace byte after maxval.
  Image img = make_image(static_cast<uint32_t>(w), static_cast<uint32_t>(h));
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    fail("truncated ppm payload", path);
  }
  return img;
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

Image load_png(const std::string& path) {
  PngReader r;
  r.fp = std::fopen(path.c_str(), "rb");
  if (!r.fp) fail("cannot open file", path);
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = r.png ? png_create_info_struct(r.png) : nullptr;
  if (!r.png || !r.info) fail("png init failed", path);
  if (setjmp(png_jmpbuf(r.png))) fail("malformed png", path);

  png_init_io(r.png, r.fp);
  png_read_info(r.png, r.info);
  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int depth = png_get_bit_depth(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);
  if (depth != 8) fail("unsupported png bit depth (want 8)", path);
  if (color != PNG_COLOR_TYPE_RGB) fail("unsupported png color type (want 8-bit RGB)", path);

  Image img = make_image(w, h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = img.pixels.data() + static_cast<size_t>(y) * w * 3;
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

void save_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open file for writing", path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) fail("write failed", path);
}

void save_png(const Image& img, const std::string& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  pi.width = img.width;
  pi.height = img.height;
  pi.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&pi, path.c_str(), 0, img.pixels.data(),
                               static_cast<png_int_32>(img.width) * 3, nullptr)) {
    fail("png write failed", path);
  }
}

// Catmull-Rom interpolation weight for |t| <= 2.
double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::fabs(t);
  if (t < 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
  return 0.0;
}

}  // namespace

Image make_image(uint32_t width, uint32_t height, uint8_t fill) {
  Image img;
  img.width = width;
  img.height = height;
  img.pixels.assign(static_cast<size_t>(width) * height * 3, fill);
  return img;
}

Image load_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) fail("cannot open file", path);
  uint8_t magic[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(magic), 2);
  probe.close();

  if (magic[0] == 'P' && magic[1] == '6') {
    std::ifstream in(path, std::ios::binary);
    return load_ppm(in, path);
  }
  if (magic[0] == 0x89 && magic[1] == 'P') {
    return load_png(path);
  }
  fail("unrecognized image format (want P6 ppm or png)", path);
}

void save_image(const Image& img, const std::string& path) {
  if (img.pixels.size() != img.pixel_count() * 3 || img.pixel_count() == 0) {
    throw std::invalid_argument("save_image: invalid image");
  }
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".ppm") {
    save_ppm(img, path);
  } else if (ext == ".png") {
    save_png(img, path);
  } else {
    fail("unsupported output extension (want .ppm or .png)", path);
  }
}

Image crop(const Image& img, uint32_t x0, uint32_t y0, uint32_t w, uint32_t h) {
  if (w == 0 || h == 0 || x0 + w > img.width || y0 + h > img.height) {
    throw std::invalid_argument("crop: rectangle outside image bounds");
  }
  Image out = make_image(w, h);
  for (uint32_t y = 0; y < h; ++y) {
    const uint8_t* src = img.pixels.data() + (static_cast<size_t>(y0 + y) * img.width + x0) * 3;
    std::copy(src, src + static_cast<size_t>(w) * 3,
              out.pixels.data() + static_cast<size_t>(y) * w * 3);
  }
  return out;
}

Image downscale_bicubic(const Image& img, double factor) {
  if (!(factor >= 0.6 && factor <= 1.0)) {
    throw std::invalid_argument("downscale_bicubic: factor outside [0.6, 1.0]");
  }
  if (factor == 1.0) return img;

  const uint32_t ow = static_cast<uint32_t>(std::max<long>(1, std::lround(img.width * factor)));
  const uint32_t oh = static_cast<uint32_t>(std::max<long>(1, std::lround(img.height * factor)));
  Image out = make_image(ow, oh);

  const double sx = static_cast<double>(img.width) / ow;
  const double sy = static_cast<double>(img.height) / oh;
  for (uint32_t oy = 0; oy < oh; ++oy) {
    const double cy = (oy + 0.5) * sy - 0.5;
    const long y0 = static_cast<long>(std::floor(cy)) - 1;
    double wy[4];
    for (int i = 0; i < 4; ++i) wy[i] = cubic_weight(cy - (y0 + i));
    for (uint32_t ox = 0; ox < ow; ++ox) {
      const double cx = (ox + 0.5) * sx - 0.5;
      const long x0 = static_cast<long>(std::floor(cx)) - 1;
      double wx[4];
      for (int i = 0; i < 4; ++i) wx[i] = cubic_weight(cx - (x0 + i));
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        double wsum = 0.0;
        for (int i = 0; i < 4; ++i) {
          const long yy = std::clamp<long>(y0 + i, 0, img.height - 1);
          for (int j = 0; j < 4; ++j) {
            const long xx = std::clamp<long>(x0 + j, 0, img.width - 1);
            const double wgt = wy[i] * wx[j];
            acc += wgt * img.at(static_cast<uint32_t>(xx), static_cast<uint32_t>(yy), c);
            wsum += wgt;
          }
        }
        const double v = acc / wsum;
        out.at(ox, oy, c) =
            static_cast<uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
      }
    }
  }
  return out;
}

}  // namespace nlrc
