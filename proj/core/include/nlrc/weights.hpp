// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#ifndef NLRC_WEIGHTS_HPP_
#define NLRC_WEIGHTS_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nlrc/tensor.hpp"

namespace nlrc {

inline constexpr int kMixtureK = 5;
inline constexpr int kFeatureChannels = 64;
inline constexpr int kTrunkChannels = 128;  // concat of feature + context
inline constexpr int kMaxTau = 5;

// The 5x5 context kernel is strictly causal in raster order: both rows
// above the center and the two positions left of it.  Everything else,
// including the center, must stay zero.
constexpr bool context_tap_causal(int ky, int kx) {
  return ky < 2 || (ky == 2 && kx < 2);
}

struct TensorSpec {
  std::string name;
  std::vector<uint32_t> dims;
};

// Canonical tensor registry: names, shapes, and a fixed order used for
// initialization and serialization.
const std::vector<TensorSpec>& model_tensor_specs();

using Sha256 = std::array<uint8_t, 32>;

// All trainable tensors, addressed by name.  The content fingerprint is
// computed lazily over the serialized tensor table and cached until the
// next mutable access.
class ModelWeights {
 public:
  ModelWeights() = default;

  Tensor& t(const std::string& name);
  const Tensor& t(const std::string& name) const;
  bool has(const std::string& name) const { return tensors_.count(name) != 0; }

  std::map<std::string, Tensor>& tensors() {
    fp_valid_ = false;
    return tensors_;
  }
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  const Sha256& fingerprint() const;
  void invalidate_fingerprint() { fp_valid_ = false; }

 private:
  std::map<std::string, Tensor> tensors_;
  mutable Sha256 fp_{};
  mutable bool fp_valid_ = false;
};

// Gradients mirror the weight tensors one for one.
using GradientSet = ModelWeights;

// Seeded Gaussian fan-in initialization; biases zero except the scale
// heads (so initial mixture scales sit near 2), per-tau modulation at
// identity, masked context taps and channel-coupling head zeroed.
ModelWeights init_model_weights(uint64_t seed);

// Zero tensors in model shapes (gradient accumulators, optimizer state).
ModelWeights zero_like_model();

// Serialized tensor table: u32 count, then per tensor (name order)
// u16 name length, name, u8 ndim, u32 dims, f64 little-endian data.
void append_tensor_table(std::vector<uint8_t>& out, const std::map<std::string, Tensor>& t);
std::map<std::string, Tensor> parse_tensor_table(const uint8_t* data, size_t size, size_t& pos);

Sha256 sha256_bytes(const uint8_t* data, size_t size);

// Weights file: "NLWT" magic, version byte, tensor table, then a 32-byte
// SHA-256 over the table.  load_weights also accepts checkpoint files
// ("NLCK") and returns just their weights block.
void save_weights(const ModelWeights& w, const std::string& path);
ModelWeights load_weights(const std::string& path);

// Checkpoint file: "NLCK" magic, version, step/seed/config-hash header,
// weights block (table + hash), Adam first/second moment tables, and a
// trailing SHA-256 over everything after the version byte.
struct CheckpointData {
  ModelWeights weights;
  std::map<std::string, Tensor> adam_m;
  std::map<std::string, Tensor> adam_v;
  uint64_t step = 0;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
};

void save_checkpoint_file(const CheckpointData& ckpt, const std::string& path);
CheckpointData load_checkpoint_file(const std::string& path);

}  // namespace nlrc

#endif  // NLRC_WEIGHTS_HPP_
