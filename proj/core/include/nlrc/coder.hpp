// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#ifndef NLRC_CODER_HPP_
#define NLRC_CODER_HPP_

#include <cstdint>
#include <vector>

namespace nlrc {

// Fixed-point frequency table with 16-bit total.  cum has n+1 entries,
// cum[0] = 0, cum[n] = 65536, every symbol frequency >= 1.
struct FreqTable {
  std::vector<uint32_t> cum;

  size_t symbol_count() const { return cum.size() - 1; }
  uint32_t freq(size_t s) const { return cum[s + 1] - cum[s]; }
};

inline constexpr uint32_t kFreqTotalBits = 16;
inline constexpr uint32_t kFreqTotal = 1u << kFreqTotalBits;

// Deterministic conversion of a probability vector into a FreqTable:
// floor-scale to 65536, raise everything to at least 1, then settle the
// remaining difference one count at a time over symbols ordered by
// descending mass (ties: ascending index).
FreqTable build_freq_table(const std::vector<double>& pmf);

// Growable byte buffer the encoder writes into.
class ByteSink {
 public:
  void put(uint8_t b) { bytes_.push_back(b); }
  const std::vector<uint8_t>& bytes() const { return bytes_; }
  std::vector<uint8_t> take() { return std::move(bytes_); }
  size_t size() const { return bytes_.size(); }

 private:
  std::vector<uint8_t> bytes_;
};

// Read cursor over an encoded buffer.  Reads past the end return zero:
// the encoder's tail is truncated to the bytes that matter, so the
// decoder may legitimately run off the end while renormalizing.
class ByteSource {
 public:
  ByteSource(const uint8_t* data, size_t size) : data_(data), size_(size) {}

  uint8_t get() { return pos_ < size_ ? data_[pos_++] : (pos_++, 0); }
  size_t position() const { return pos_; }

 private:
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

// Range coder with a 64-bit range and byte-wise renormalization; carries
// are absorbed into a cached byte plus a run of pending 0xFF bytes.  With
// a 16-bit frequency total the range never drops below 2^40 before
// renormalization, so the code-space lost to integer division is under
// 2^-40 bits per symbol and the whole-stream overhead stays below 64 bits
// (4 framing bytes + rounding) for any realistic message.
class RangeEncoder {
 public:
  explicit RangeEncoder(ByteSink& sink) : sink_(&sink) {}

  // table must satisfy the FreqTable invariants; s < symbol_count.
  void encode(const FreqTable& table, size_t s);

  // Flushes the minimal tail that pins the final interval.  No further
  // encode calls are allowed.
  void finish();

 private:
  void shift_low();

  ByteSink* sink_;
  unsigned __int128 low_ = 0;
  uint64_t range_ = ~0ull;
  uint8_t cache_ = 0;
  uint64_t cache_count_ = 1;  // the initial zero cache byte is a framing byte
};

class RangeDecoder {
 public:
  // Consumes the leading framing byte and primes the code value.
  explicit RangeDecoder(ByteSource& src);

  // Returns the symbol index under the same table the encoder used.
  size_t decode(const FreqTable& table);

 private:
  ByteSource* src_;
  uint64_t code_ = 0;
  uint64_t range_ = ~0ull;
};

}  // namespace nlrc

#endif  // NLRC_CODER_HPP_
