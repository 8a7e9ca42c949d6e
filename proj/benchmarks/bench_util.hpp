// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

// Deterministic inputs for the micro-benchmarks: a textured image with
// multi-scale structure plus grain, loosely photograph-like so the model
// and coder see realistic symbol statistics.

#ifndef NLRC_BENCHMARKS_BENCH_UTIL_HPP_
#define NLRC_BENCHMARKS_BENCH_UTIL_HPP_

#include <cmath>
#include <cstdint>

#include "nlrc/image.hpp"

namespace benchutil {

inline uint64_t mix(uint64_t v) {
  v += 0x9e3779b97f4a7c15ull;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ull;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebull;
  return v ^ (v >> 31);
}

inline nlrc::Image textured(uint32_t w, uint32_t h, uint64_t seed) {
  nlrc::Image img = nlrc::make_image(w, h, 0);
  for (uint32_t y = 0; y < h; ++y) {
    for (uint32_t x = 0; x < w; ++x) {
      const double base = 127.5 + 55.0 * std::sin(0.11 * x + 0.07 * y + 0.3 * seed) +
                          25.0 * std::sin(0.41 * x - 0.29 * y) +
                          12.0 * std::sin(1.3 * x + 0.9 * y);
      for (uint32_t c = 0; c < 3; ++c) {
        const int grain =
            static_cast<int>(mix(seed ^ (static_cast<uint64_t>(y) << 24 ^ x << 4 ^ c)) % 7) - 3;
        double v = base + 9.0 * static_cast<double>(c) * std::sin(0.05 * x) + grain;
        img.at(x, y, c) = static_cast<uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
      }
    }
  }
  return img;
}

}  // namespace benchutil

#endif  // NLRC_BENCHMARKS_BENCH_UTIL_HPP_
