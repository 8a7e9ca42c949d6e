// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#ifndef NLRC_IMAGE_HPP_
#define NLRC_IMAGE_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace nlrc {

// 8-bit RGB image, interleaved row-major storage (R,G,B,R,G,B,...).
struct Image {
  uint32_t width = 0;
  uint32_t height = 0;
  std::vector<uint8_t> pixels;  // size = width * height * 3

  uint8_t& at(uint32_t x, uint32_t y, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  uint8_t at(uint32_t x, uint32_t y, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

Image make_image(uint32_t width, uint32_t height, uint8_t fill = 0);

// Reads a PNG or binary PPM (P6, maxval 255) file, keyed on the file's
// magic bytes rather than its name.  Only 8-bit RGB content is accepted;
// grayscale, palette, alpha and 16-bit inputs are rejected with an error.
Image load_image(const std::string& path);

// Writes PPM (P6) or PNG depending on the extension (".ppm"/".png").
void save_image(const Image& img, const std::string& path);

Image crop(const Image& img, uint32_t x0, uint32_t y0, uint32_t w, uint32_t h);

// Catmull-Rom bicubic resampling with edge clamping.  Output dimensions are
// round(dim * factor), at least 1.  Used for scale augmentation during
// training, so only factors in [0.6, 1.0] are supported; 1.0 is the
// identity.
Image downscale_bicubic(const Image& img, double factor);

}  // namespace nlrc

#endif  // NLRC_IMAGE_HPP_
