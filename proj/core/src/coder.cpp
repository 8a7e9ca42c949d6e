// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include "nlrc/coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nlrc {

namespace {
// Renormalization threshold: keep range in [2^56, 2^64).
constexpr uint64_t kTop = 1ull << 56;
// The flushed tail is rounded up to a multiple of 2^40, which always lies
// inside a final interval of width >= 2^56.
constexpr uint64_t kTailAlign = 1ull << 40;
}  // namespace

FreqTable build_freq_table(const std::vector<double>& pmf) {
  const size_t n = pmf.size();
  if (n == 0) throw std::invalid_argument("build_freq_table: empty pmf");
  if (n > kFreqTotal - 16) {
    throw std::invalid_argument("build_freq_table: alphabet too large for 16-bit totals");
  }

  std::vector<uint32_t> freq(n);
  int64_t total = 0;
  for (size_t s = 0; s < n; ++s) {
    double p = pmf[s];
    if (!(p >= 0.0)) throw std::invalid_argument("build_freq_table: negative or NaN mass");
    freq[s] = std::max<uint32_t>(1, static_cast<uint32_t>(p * kFreqTotal));
    total += freq[s];
  }

  // Settle the remaining +/- difference one count at a time, visiting
  // symbols by descending mass (ascending index on ties) so the result is
  // independent of everything but the pmf bits themselves.
  std::vector<uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](uint32_t a, uint32_t b) { return pmf[a] > pmf[b]; });

  int64_t diff = static_cast<int64_t>(kFreqTotal) - total;
  while (diff != 0) {
    for (uint32_t s : order) {
      if (diff == 0) break;
      if (diff > 0) {
        ++freq[s];
        --diff;
      } else if (freq[s] > 1) {
        --freq[s];
        ++diff;
      }
    }
  }

  FreqTable t;
  t.cum.resize(n + 1);
  t.cum[0] = 0;
  for (size_t s = 0; s < n; ++s) t.cum[s + 1] = t.cum[s] + freq[s];
  return t;
}

void RangeEncoder::shift_low() {
  const uint64_t lo = static_cast<uint64_t>(low_);
  if (lo < 0xFF00000000000000ull || (low_ >> 64) != 0) {
    const uint8_t carry = static_cast<uint8_t>(low_ >> 64);
    uint8_t b = cache_;
    do {
      sink_->put(static_cast<uint8_t>(b + carry));
      b = 0xFF;
    } while (--cache_count_ != 0);
    cache_ = static_cast<uint8_t>(lo >> 56);
  }
  ++cache_count_;
  low_ = static_cast<unsigned __int128>(lo << 8);
}

void RangeEncoder::encode(const FreqTable& table, size_t s) {
  const uint64_t r = range_ >> kFreqTotalBits;
  low_ += static_cast<unsigned __int128>(r) * table.cum[s];
  range_ = r * table.freq(s);
  while (range_ < kTop) {
    shift_low();
    range_ <<= 8;
  }
}

void RangeEncoder::finish() {
  // Settle any pending carry first so the rounding below can add at most
  // one more.
  if ((low_ >> 64) != 0) shift_low();
  // Round low up so everything below 2^40 is zero; the increment is less
  // than the final range, so the rounded value still lies in the interval
  // and the decoder can fill the unsent low bytes with zeros.
  const uint64_t lo = static_cast<uint64_t>(low_);
  low_ += (0 - lo) & (kTailAlign - 1);
  for (int i = 0; i < 4; ++i) shift_low();
}

RangeDecoder::RangeDecoder(ByteSource& src) : src_(&src) {
  src_->get();  // framing byte emitted by the encoder's first shift_low
  for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | src_->get();
}

size_t RangeDecoder::decode(const FreqTable& table) {
  const uint64_t r = range_ >> kFreqTotalBits;
  uint64_t dv = code_ / r;
  if (dv >= kFreqTotal) dv = kFreqTotal - 1;  // unreachable on intact streams

  // Largest s with cum[s] <= dv.
  const auto it = std::upper_bound(table.cum.begin(), table.cum.end(), static_cast<uint32_t>(dv));
  const size_t s = static_cast<size_t>(it - table.cum.begin()) - 1;

  code_ -= r * table.cum[s];
  range_ = r * table.freq(s);
  while (range_ < kTop) {
    code_ = (code_ << 8) | src_->get();
    range_ <<= 8;
  }
  return s;
}

}  // namespace nlrc
