// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include "nlrc/weights.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace nlrc {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace {

constexpr char kWeightsMagic[4] = {'N', 'L', 'W', 'T'};
constexpr uint8_t kWeightsVersion = 1;

template <typename T>
void append_pod(std::vector<uint8_t>& out, T v) {
  const size_t n = out.size();
  out.resize(n + sizeof(T));
  std::memcpy(out.data() + n, &v, sizeof(T));
}

template <typename T>
T read_pod(const uint8_t* data, size_t size, size_t& pos) {
  if (pos + sizeof(T) > size) throw std::runtime_error("tensor table truncated");
  T v;
  std::memcpy(&v, data + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::vector<TensorSpec> build_specs() {
  std::vector<TensorSpec> s;
  const uint32_t F = kFeatureChannels;
  const uint32_t T = kTrunkChannels;
  const uint32_t H = 3 * kMixtureK;  // one mixture parameter per channel and component
  const uint32_t N = kMaxTau;        // conditional variants, one row per tau in {1..5}

  s.push_back({"feat.conv1.w", {F, 3, 3, 3}});
  s.push_back({"feat.conv1.b", {F}});
  s.push_back({"feat.conv2.w", {F, F, 3, 3}});
  s.push_back({"feat.conv2.b", {F}});
  s.push_back({"ctx.conv.w", {F, 3, 5, 5}});
  s.push_back({"ctx.conv.b", {F}});

  for (const char* est : {"plain", "cond"}) {
    const std::string p = est;
    auto add = [&s](std::string name, std::vector<uint32_t> dims) {
      s.push_back({std::move(name), std::move(dims)});
    };
    add(p + ".fc1.w", {T, T});
    add(p + ".fc1.b", {T});
    add(p + ".fc2.w", {T, T});
    add(p + ".fc2.b", {T});
    add(p + ".pi.w", {H, T});
    add(p + ".pi.b", {H});
    add(p + ".mu.w", {H, T});
    add(p + ".mu.b", {H});
    add(p + ".sg.w", {H, T});
    add(p + ".sg.b", {H});
    add(p + ".bt.w", {3, T});
    add(p + ".bt.b", {3});
    if (p == "cond") {
      for (const char* layer : {"fc1", "fc2", "pi", "mu", "sg", "bt"}) {
        const uint32_t c = std::string(layer) == "fc1" || std::string(layer) == "fc2" ? T
                           : std::string(layer) == "bt"                              ? 3
                                                                                     : H;
        add(p + "." + layer + ".s", {N, c});
        add(p + "." + layer + ".t", {N, c});
      }
    }
  }
  return s;
}

}  // namespace

const std::vector<TensorSpec>& model_tensor_specs() {
  static const std::vector<TensorSpec>* specs = new std::vector<TensorSpec>(build_specs());
  return *specs;
}

Tensor& ModelWeights::t(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::invalid_argument("unknown tensor: " + name);
  fp_valid_ = false;
  return it->second;
}

const Tensor& ModelWeights::t(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::invalid_argument("unknown tensor: " + name);
  return it->second;
}

const Sha256& ModelWeights::fingerprint() const {
  if (!fp_valid_) {
    std::vector<uint8_t> buf;
    append_tensor_table(buf, tensors_);
    fp_ = sha256_bytes(buf.data(), buf.size());
    fp_valid_ = true;
  }
  return fp_;
}

ModelWeights init_model_weights(uint64_t seed) {
  ModelWeights w;
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (const TensorSpec& spec : model_tensor_specs()) {
    Tensor t(spec.dims);
    const std::string name = spec.name;
    const std::string suffix = name.substr(name.size() - 2);
    if (suffix == ".w") {
      size_t fan_in = 1;
      for (size_t d = 1; d < spec.dims.size(); ++d) fan_in *= spec.dims[d];
      const double scale = std::sqrt(1.0 / static_cast<double>(fan_in));
      for (size_t i = 0; i < t.size(); ++i) t[i] = gauss(eng) * scale;
    } else if (suffix == ".s") {
      t.fill(1.0);
    }  // biases and shifts stay zero
    w.tensors()[name] = std::move(t);
  }

  // Mixture scales start near 2 (softplus(1.85) + floor); channel coupling
  // starts disabled so early training is stable.
  w.t("plain.sg.b").fill(1.85);
  w.t("cond.sg.b").fill(1.85);
  w.t("plain.bt.w").fill(0.0);
  w.t("cond.bt.w").fill(0.0);

  Tensor& ctx = w.t("ctx.conv.w");
  for (uint32_t oc = 0; oc < kFeatureChannels; ++oc) {
    for (uint32_t ic = 0; ic < 3; ++ic) {
      for (int ky = 0; ky < 5; ++ky) {
        for (int kx = 0; kx < 5; ++kx) {
          if (!context_tap_causal(ky, kx)) ctx.at(oc, ic, ky, kx) = 0.0;
        }
      }
    }
  }
  return w;
}

ModelWeights zero_like_model() {
  ModelWeights w;
  for (const TensorSpec& spec : model_tensor_specs()) {
    w.tensors()[spec.name] = Tensor(spec.dims);
  }
  return w;
}

void append_tensor_table(std::vector<uint8_t>& out, const std::map<std::string, Tensor>& t) {
  append_pod<uint32_t>(out, static_cast<uint32_t>(t.size()));
  for (const auto& [name, tensor] : t) {
    append_pod<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    append_pod<uint8_t>(out, static_cast<uint8_t>(tensor.rank()));
    for (uint32_t d : tensor.dims()) append_pod<uint32_t>(out, d);
    const size_t n = out.size();
    out.resize(n + tensor.size() * sizeof(double));
    std::memcpy(out.data() + n, tensor.data(), tensor.size() * sizeof(double));
  }
}

std::map<std::string, Tensor> parse_tensor_table(const uint8_t* data, size_t size, size_t& pos) {
  std::map<std::string, Tensor> out;
  const uint32_t count = read_pod<uint32_t>(data, size, pos);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = read_pod<uint16_t>(data, size, pos);
    if (pos + name_len > size) throw std::runtime_error("tensor table truncated");
    std::string name(reinterpret_cast<const char*>(data + pos), name_len);
    pos += name_len;
    const uint8_t ndim = read_pod<uint8_t>(data, size, pos);
    if (ndim == 0 || ndim > 4) throw std::runtime_error("tensor rank out of range");
    std::vector<uint32_t> dims(ndim);
    size_t elems = 1;
    for (auto& d : dims) {
      d = read_pod<uint32_t>(data, size, pos);
      elems *= d;
    }
    if (elems > (1u << 28)) throw std::runtime_error("tensor unreasonably large");
    Tensor t(dims);
    if (pos + elems * sizeof(double) > size) throw std::runtime_error("tensor table truncated");
    std::memcpy(t.data(), data + pos, elems * sizeof(double));
    pos += elems * sizeof(double);
    out[std::move(name)] = std::move(t);
  }
  return out;
}

Sha256 sha256_bytes(const uint8_t* data, size_t size) {
  Sha256 out{};
  unsigned int len = 0;
  if (!EVP_Digest(data, size, out.data(), &len, EVP_sha256(), nullptr) || len != 32) {
    throw std::runtime_error("sha256 failed");
  }
  return out;
}

void save_weights(const ModelWeights& w, const std::string& path) {
  std::vector<uint8_t> buf(kWeightsMagic, kWeightsMagic + 4);
  buf.push_back(kWeightsVersion);
  std::vector<uint8_t> table;
  append_tensor_table(table, w.tensors());
  const Sha256 fp = sha256_bytes(table.data(), table.size());
  buf.insert(buf.end(), table.begin(), table.end());
  buf.insert(buf.end(), fp.begin(), fp.end());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open: " + path);
  const std::streamsize n = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(buf.data()), n);
  if (!in) throw std::runtime_error("read failed: " + path);
  return buf;
}

ModelWeights weights_from_table_blob(const uint8_t* data, size_t size, size_t& pos) {
  const size_t table_start = pos;
  std::map<std::string, Tensor> table = parse_tensor_table(data, size, pos);
  if (pos + 32 > size) throw std::runtime_error("weights file truncated");
  Sha256 stored;
  std::memcpy(stored.data(), data + pos, 32);
  pos += 32;
  const Sha256 actual = sha256_bytes(data + table_start, pos - 32 - table_start);
  if (stored != actual) throw std::runtime_error("weights fingerprint mismatch");
  ModelWeights w;
  w.tensors() = std::move(table);
  return w;
}

}  // namespace

ModelWeights load_weights(const std::string& path) {
  const std::vector<uint8_t> buf = read_file(path);
  if (buf.size() < 6) throw std::runtime_error("not a weights file: " + path);
  if (std::memcmp(buf.data(), kWeightsMagic, 4) == 0) {
    if (buf[4] != kWeightsVersion) throw std::runtime_error("unsupported weights version");
    size_t pos = 5;
    return weights_from_table_blob(buf.data(), buf.size(), pos);
  }
  if (std::memcmp(buf.data(), "NLCK", 4) == 0) {
    // Checkpoint: skip the header, take the weights block.
    if (buf[4] != 1) throw std::runtime_error("unsupported checkpoint version");
    size_t pos = 5 + 3 * sizeof(uint64_t);
    return weights_from_table_blob(buf.data(), buf.size(), pos);
  }
  throw std::runtime_error("unrecognized weights file: " + path);
}

void save_checkpoint_file(const CheckpointData& ckpt, const std::string& path) {
  std::vector<uint8_t> buf = {'N', 'L', 'C', 'K', 1};
  append_pod<uint64_t>(buf, ckpt.step);
  append_pod<uint64_t>(buf, ckpt.seed);
  append_pod<uint64_t>(buf, ckpt.config_hash);

  std::vector<uint8_t> wtable;
  append_tensor_table(wtable, ckpt.weights.tensors());
  const Sha256 wfp = sha256_bytes(wtable.data(), wtable.size());
  buf.insert(buf.end(), wtable.begin(), wtable.end());
  buf.insert(buf.end(), wfp.begin(), wfp.end());

  append_tensor_table(buf, ckpt.adam_m);
  append_tensor_table(buf, ckpt.adam_v);

  const Sha256 total = sha256_bytes(buf.data() + 5, buf.size() - 5);
  buf.insert(buf.end(), total.begin(), total.end());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

CheckpointData load_checkpoint_file(const std::string& path) {
  const std::vector<uint8_t> buf = read_file(path);
  if (buf.size() < 5 + 3 * sizeof(uint64_t) + 32 || std::memcmp(buf.data(), "NLCK", 4) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  if (buf[4] != 1) throw std::runtime_error("unsupported checkpoint version");

  const Sha256 actual = sha256_bytes(buf.data() + 5, buf.size() - 5 - 32);
  Sha256 stored;
  std::memcpy(stored.data(), buf.data() + buf.size() - 32, 32);
  if (stored != actual) throw std::runtime_error("checkpoint fingerprint mismatch");

  CheckpointData out;
  size_t pos = 5;
  out.step = read_pod<uint64_t>(buf.data(), buf.size(), pos);
  out.seed = read_pod<uint64_t>(buf.data(), buf.size(), pos);
  out.config_hash = read_pod<uint64_t>(buf.data(), buf.size(), pos);
  out.weights = weights_from_table_blob(buf.data(), buf.size(), pos);
  out.adam_m = parse_tensor_table(buf.data(), buf.size(), pos);
  out.adam_v = parse_tensor_table(buf.data(), buf.size(), pos);
  return out;
}

}  // namespace nlrc
