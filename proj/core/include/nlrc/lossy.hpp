// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#ifndef NLRC_LOSSY_HPP_
#define NLRC_LOSSY_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nlrc/image.hpp"

namespace nlrc {

// 8x8 block transform codec settings.  One uniform quantization step per
// zigzag band: DC alone, then low / mid / high frequency groups
// (positions 1-5, 6-20, 21-63).  Channels are coded independently; no
// chroma transform.
struct BlockTransformConfig {
  // Defaults put reconstruction quality near 39 dB on textured content,
  // the operating point the residual model is tuned around.
  std::array<uint32_t, 4> band_steps{11, 14, 18, 22};

  // FNV-1a over the serialized steps; stored in the payload so a decode
  // against the wrong settings fails loudly instead of quietly.
  uint32_t fingerprint() const;
};

// Orthonormal type-II 8x8 DCT pair.  Row-major 64-double blocks; inverse
// of forward recovers the input to floating-point accuracy.
void dct8x8(const double* block, double* out);
void idct8x8(const double* block, double* out);

// Zigzag scan position -> (row, col), standard diagonal order.
const std::array<std::pair<int, int>, 64>& zigzag_order();

// Band index (0..3) of a zigzag position.
int band_of_zigzag(int pos);

// Encodes x with the block transform: level shift, per-block DCT,
// per-band uniform quantization, differential DC, adaptive range-coded
// magnitude categories with raw mantissa bits.  Boundary blocks pad by
// edge replication and crop after the inverse transform.  Returns the
// payload and the reconstruction the decoder will produce, bit for bit.
std::pair<std::vector<uint8_t>, Image> encode_lossy(const Image& x,
                                                    const BlockTransformConfig& cfg);

// Rebuilds the reconstruction from an encode_lossy payload.  Throws on
// truncation, trailing garbage, or a config fingerprint mismatch.
Image decode_lossy(const std::vector<uint8_t>& payload, const BlockTransformConfig& cfg);

// Uniform interface so the coding pipeline can treat the base codec as a
// black box.
class LossyCodec {
 public:
  virtual ~LossyCodec() = default;
  virtual std::string identifier() const = 0;
  virtual std::pair<std::vector<uint8_t>, Image> encode(const Image& x) const = 0;
  virtual Image decode(const std::vector<uint8_t>& payload) const = 0;
};

class BlockTransformCodec final : public LossyCodec {
 public:
  explicit BlockTransformCodec(BlockTransformConfig cfg = {}) : cfg_(cfg) {}
  std::string identifier() const override { return "bt8-v1"; }
  std::pair<std::vector<uint8_t>, Image> encode(const Image& x) const override {
    return encode_lossy(x, cfg_);
  }
  Image decode(const std::vector<uint8_t>& payload) const override {
    return decode_lossy(payload, cfg_);
  }
  const BlockTransformConfig& config() const { return cfg_; }

 private:
  BlockTransformConfig cfg_;
};

// Every codec the conformance suite should exercise.
const std::vector<const LossyCodec*>& registered_lossy_codecs();

}  // namespace nlrc

#endif  // NLRC_LOSSY_HPP_
