// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include "nlrc/lossy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "nlrc/coder.hpp"

namespace nlrc {

namespace {

constexpr int kBlock = 8;
constexpr int kMaxCategory = 12;  // |coefficient index| < 2^12 for any step >= 1

const std::array<double, 64>& dct_basis() {
  static const std::array<double, 64> basis = [] {
    std::array<double, 64> b{};
    const double pi = std::acos(-1.0);
    for (int u = 0; u < kBlock; ++u) {
      const double amp = u == 0 ? std::sqrt(1.0 / kBlock) : std::sqrt(2.0 / kBlock);
      for (int x = 0; x < kBlock; ++x) {
        b[u * kBlock + x] = amp * std::cos((2 * x + 1) * u * pi / (2 * kBlock));
      }
    }
    return b;
  }();
  return basis;
}

uint32_t read_u32(const std::vector<uint8_t>& v, size_t& off) {
  if (off + 4 > v.size()) throw std::invalid_argument("lossy payload truncated");
  uint32_t x;
  std::memcpy(&x, v.data() + off, 4);
  off += 4;
  return x;
}

void append_u32(std::vector<uint8_t>& v, uint32_t x) {
  const size_t n = v.size();
  v.resize(n + 4);
  std::memcpy(v.data() + n, &x, 4);
}

// Per-context category statistics; both sides replay the same updates so
// their tables stay in lockstep.
struct AdaptiveCounts {
  std::array<uint32_t, kMaxCategory + 1> counts;

  AdaptiveCounts() { counts.fill(1); }

  FreqTable table() const {
    double total = 0.0;
    for (uint32_t c : counts) total += c;
    std::vector<double> pmf(counts.size());
    for (size_t i = 0; i < counts.size(); ++i) pmf[i] = counts[i] / total;
    return build_freq_table(pmf);
  }

  void update(size_t s) {
    counts[s] += 24;
    uint32_t total = 0;
    for (uint32_t c : counts) total += c;
    if (total > (1u << 14)) {
      for (uint32_t& c : counts) c = std::max(1u, c >> 1);
    }
  }
};

const FreqTable& bit_table() {
  static const FreqTable t{{0, kFreqTotal / 2, kFreqTotal}};
  return t;
}

void encode_coeff(RangeEncoder& enc, AdaptiveCounts& model, int64_t v) {
  const uint64_t av = static_cast<uint64_t>(v < 0 ? -v : v);
  const int cat = av == 0 ? 0 : std::bit_width(av);
  if (cat > kMaxCategory) throw std::logic_error("lossy: coefficient magnitude overflow");
  enc.encode(model.table(), static_cast<size_t>(cat));
  model.update(static_cast<size_t>(cat));
  if (cat == 0) return;
  enc.encode(bit_table(), v < 0 ? 1 : 0);
  const uint64_t mant = av - (1ull << (cat - 1));
  for (int i = cat - 2; i >= 0; --i) {
    enc.encode(bit_table(), (mant >> i) & 1);
  }
}

int64_t decode_coeff(RangeDecoder& dec, AdaptiveCounts& model) {
  const size_t cat = dec.decode(model.table());
  model.update(cat);
  if (cat == 0) return 0;
  const bool neg = dec.decode(bit_table()) != 0;
  uint64_t av = 1ull << (cat - 1);
  for (int i = static_cast<int>(cat) - 2; i >= 0; --i) {
    av |= static_cast<uint64_t>(dec.decode(bit_table())) << i;
  }
  return neg ? -static_cast<int64_t>(av) : static_cast<int64_t>(av);
}

// Dequantizes one block of zigzag-ordered indices (DC already
// un-differenced) and writes the rounded, clamped spatial samples into
// the channel of img that the block covers.
void render_block(const int64_t* q, const BlockTransformConfig& cfg, uint32_t by, uint32_t bx,
                  int c, Image* img) {
  double coef[64] = {};
  const auto& zz = zigzag_order();
  for (int pos = 0; pos < 64; ++pos) {
    const auto [u, v] = zz[pos];
    coef[u * kBlock + v] =
        static_cast<double>(q[pos]) * cfg.band_steps[static_cast<size_t>(band_of_zigzag(pos))];
  }
  double spatial[64];
  idct8x8(coef, spatial);
  for (int r = 0; r < kBlock; ++r) {
    const uint32_t y = by * kBlock + r;
    if (y >= img->height) break;
    for (int cc = 0; cc < kBlock; ++cc) {
      const uint32_t x = bx * kBlock + cc;
      if (x >= img->width) break;
      const long px = std::lround(spatial[r * kBlock + cc] + 128.0);
      img->at(x, y, c) = static_cast<uint8_t>(std::clamp(px, 0l, 255l));
    }
  }
}

}  // namespace

uint32_t BlockTransformConfig::fingerprint() const {
  std::vector<uint8_t> bytes;
  for (uint32_t s : band_steps) append_u32(bytes, s);
  uint32_t h = 2166136261u;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 16777619u;
  }
  return h;
}

void dct8x8(const double* block, double* out) {
  const auto& b = dct_basis();
  double tmp[64];
  for (int u = 0; u < kBlock; ++u) {
    for (int y = 0; y < kBlock; ++y) {
      double acc = 0.0;
      for (int x = 0; x < kBlock; ++x) acc += b[u * kBlock + x] * block[x * kBlock + y];
      tmp[u * kBlock + y] = acc;
    }
  }
  for (int u = 0; u < kBlock; ++u) {
    for (int v = 0; v < kBlock; ++v) {
      double acc = 0.0;
      for (int y = 0; y < kBlock; ++y) acc += b[v * kBlock + y] * tmp[u * kBlock + y];
      out[u * kBlock + v] = acc;
    }
  }
}

void idct8x8(const double* block, double* out) {
  const auto& b = dct_basis();
  double tmp[64];
  for (int x = 0; x < kBlock; ++x) {
    for (int v = 0; v < kBlock; ++v) {
      double acc = 0.0;
      for (int u = 0; u < kBlock; ++u) acc += b[u * kBlock + x] * block[u * kBlock + v];
      tmp[x * kBlock + v] = acc;
    }
  }
  for (int x = 0; x < kBlock; ++x) {
    for (int y = 0; y < kBlock; ++y) {
      double acc = 0.0;
      for (int v = 0; v < kBlock; ++v) acc += b[v * kBlock + y] * tmp[x * kBlock + v];
      out[x * kBlock + y] = acc;
    }
  }
}

const std::array<std::pair<int, int>, 64>& zigzag_order() {
  static const std::array<std::pair<int, int>, 64> order = [] {
    std::array<std::pair<int, int>, 64> zz{};
    int idx = 0;
    for (int d = 0; d <= 14; ++d) {
      const int lo = std::max(0, d - 7), hi = std::min(d, 7);
      if (d % 2 == 1) {
        for (int y = lo; y <= hi; ++y) zz[idx++] = {y, d - y};
      } else {
        for (int y = hi; y >= lo; --y) zz[idx++] = {y, d - y};
      }
    }
    return zz;
  }();
  return order;
}

int band_of_zigzag(int pos) {
  if (pos == 0) return 0;
  if (pos <= 5) return 1;
  if (pos <= 20) return 2;
  return 3;
}

std::pair<std::vector<uint8_t>, Image> encode_lossy(const Image& x,
                                                    const BlockTransformConfig& cfg) {
  if (x.width == 0 || x.height == 0) throw std::invalid_argument("encode_lossy: empty image");
  for (uint32_t s : cfg.band_steps) {
    if (s < 1) throw std::invalid_argument("encode_lossy: quantization steps must be >= 1");
  }
  const uint32_t bw = (x.width + kBlock - 1) / kBlock;
  const uint32_t bh = (x.height + kBlock - 1) / kBlock;
  Image recon = make_image(x.width, x.height, 0);

  std::vector<uint8_t> payload;
  append_u32(payload, cfg.fingerprint());
  append_u32(payload, x.width);
  append_u32(payload, x.height);

  const auto& zz = zigzag_order();
  for (int c = 0; c < 3; ++c) {
    ByteSink sink;
    RangeEncoder enc(sink);
    std::array<AdaptiveCounts, 4> models;
    int64_t prev_dc = 0;
    for (uint32_t by = 0; by < bh; ++by) {
      for (uint32_t bx = 0; bx < bw; ++bx) {
        double block[64];
        for (int r = 0; r < kBlock; ++r) {
          const uint32_t y = std::min(by * kBlock + r, x.height - 1);
          for (int cc = 0; cc < kBlock; ++cc) {
            const uint32_t xx = std::min(bx * kBlock + cc, x.width - 1);
            block[r * kBlock + cc] = static_cast<double>(x.at(xx, y, c)) - 128.0;
          }
        }
        double coef[64];
        dct8x8(block, coef);
        int64_t q[64];
        for (int pos = 0; pos < 64; ++pos) {
          const auto [u, v] = zz[pos];
          const uint32_t step = cfg.band_steps[static_cast<size_t>(band_of_zigzag(pos))];
          q[pos] = std::llround(coef[u * kBlock + v] / step);
        }
        const int64_t dc = q[0];
        q[0] = dc - prev_dc;
        prev_dc = dc;
        for (int pos = 0; pos < 64; ++pos) {
          encode_coeff(enc, models[static_cast<size_t>(band_of_zigzag(pos))], q[pos]);
        }
        q[0] = dc;
        render_block(q, cfg, by, bx, c, &recon);
      }
    }
    enc.finish();
    const std::vector<uint8_t> stream = sink.take();
    append_u32(payload, static_cast<uint32_t>(stream.size()));
    payload.insert(payload.end(), stream.begin(), stream.end());
  }
  return {std::move(payload), std::move(recon)};
}

Image decode_lossy(const std::vector<uint8_t>& payload, const BlockTransformConfig& cfg) {
  size_t off = 0;
  const uint32_t fp = read_u32(payload, off);
  if (fp != cfg.fingerprint()) {
    throw std::invalid_argument("decode_lossy: config fingerprint mismatch");
  }
  const uint32_t width = read_u32(payload, off);
  const uint32_t height = read_u32(payload, off);
  if (width == 0 || height == 0) throw std::invalid_argument("decode_lossy: corrupt dimensions");

  const uint32_t bw = (width + kBlock - 1) / kBlock;
  const uint32_t bh = (height + kBlock - 1) / kBlock;
  Image recon = make_image(width, height, 0);

  for (int c = 0; c < 3; ++c) {
    const uint32_t len = read_u32(payload, off);
    if (off + len > payload.size()) throw std::invalid_argument("lossy payload truncated");
    ByteSource src(payload.data() + off, len);
    off += len;
    RangeDecoder dec(src);
    std::array<AdaptiveCounts, 4> models;
    int64_t prev_dc = 0;
    for (uint32_t by = 0; by < bh; ++by) {
      for (uint32_t bx = 0; bx < bw; ++bx) {
        int64_t q[64];
        for (int pos = 0; pos < 64; ++pos) {
          q[pos] = decode_coeff(dec, models[static_cast<size_t>(band_of_zigzag(pos))]);
        }
        q[0] += prev_dc;
        prev_dc = q[0];
        render_block(q, cfg, by, bx, c, &recon);
      }
    }
  }
  if (off != payload.size()) throw std::invalid_argument("decode_lossy: trailing bytes");
  return recon;
}

const std::vector<const LossyCodec*>& registered_lossy_codecs() {
  static const BlockTransformCodec default_codec;
  static const std::vector<const LossyCodec*> all{&default_codec};
  return all;
}

}  // namespace nlrc
