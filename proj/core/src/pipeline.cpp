// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include "nlrc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "model_detail.hpp"
#include "nlrc/coder.hpp"
#include "nlrc/model.hpp"
#include "nlrc/quantizer.hpp"

namespace nlrc {

namespace {

constexpr char kMagic[4] = {'N', 'L', 'L', 'C'};
constexpr uint8_t kVersion = 1;

void append_u32(std::vector<uint8_t>& v, uint32_t x) {
  const size_t n = v.size();
  v.resize(n + 4);
  std::memcpy(v.data() + n, &x, 4);
}

uint32_t read_u32(const std::vector<uint8_t>& v, size_t& off) {
  if (off + 4 > v.size()) throw std::invalid_argument("container truncated");
  uint32_t x;
  std::memcpy(&x, v.data() + off, 4);
  off += 4;
  return x;
}

// Distribution over the coded alphabet for one channel, with the means
// shifted by the already-coded earlier channels.  Encoder and decoder
// both come through here, so their frequency tables match bit for bit.
std::vector<double> channel_dist(const PixelParams& pp, int c, int q1, int q2, int tau) {
  double mu[kMixtureK];
  double shift = 0.0;
  if (c == 1) {
    shift = pp.beta[0] * q1;
  } else if (c == 2) {
    shift = pp.beta[1] * q1 + pp.beta[2] * q2;
  }
  for (int k = 0; k < kMixtureK; ++k) mu[k] = pp.mu[c][k] + shift;
  if (tau == 0) return discrete_pmf(mu, pp.sigma[c], pp.pi[c]);
  return quantized_bin_pmf(mu, pp.sigma[c], pp.pi[c], tau);
}

Image reconstruct_image(const Image& xt, const ResidualPlane& rq) {
  Image out = make_image(xt.width, xt.height, 0);
  for (uint32_t y = 0; y < xt.height; ++y) {
    for (uint32_t x = 0; x < xt.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = reconstruct_pixel(xt.at(x, y, c), rq.at(y, x, c));
      }
    }
  }
  return out;
}

void require_weights(const ModelWeights& w) {
  if (w.tensors().empty()) throw std::invalid_argument("model weights not initialized");
}

}  // namespace

std::vector<uint8_t> CodedContainer::serialize() const {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  append_u32(out, width);
  append_u32(out, height);
  out.push_back(tau);
  out.push_back(flags);
  out.insert(out.end(), weights_fingerprint.begin(), weights_fingerprint.end());
  append_u32(out, static_cast<uint32_t>(lossy_payload.size()));
  out.insert(out.end(), lossy_payload.begin(), lossy_payload.end());
  append_u32(out, static_cast<uint32_t>(residual_payload.size()));
  out.insert(out.end(), residual_payload.begin(), residual_payload.end());
  return out;
}

CodedContainer CodedContainer::parse(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::invalid_argument("container: bad magic");
  }
  if (bytes[4] != kVersion) throw std::invalid_argument("container: unsupported version");
  size_t off = 5;
  CodedContainer c;
  c.width = read_u32(bytes, off);
  c.height = read_u32(bytes, off);
  if (off + 2 + c.weights_fingerprint.size() > bytes.size()) {
    throw std::invalid_argument("container truncated");
  }
  c.tau = bytes[off++];
  c.flags = bytes[off++];
  if (c.tau > kMaxTau) throw std::invalid_argument("container: tau out of range");
  std::memcpy(c.weights_fingerprint.data(), bytes.data() + off, c.weights_fingerprint.size());
  off += c.weights_fingerprint.size();
  const uint32_t lossy_len = read_u32(bytes, off);
  if (off + lossy_len > bytes.size()) throw std::invalid_argument("container truncated");
  c.lossy_payload.assign(bytes.begin() + off, bytes.begin() + off + lossy_len);
  off += lossy_len;
  const uint32_t res_len = read_u32(bytes, off);
  if (off + res_len > bytes.size()) throw std::invalid_argument("container truncated");
  c.residual_payload.assign(bytes.begin() + off, bytes.begin() + off + res_len);
  off += res_len;
  if (off != bytes.size()) throw std::invalid_argument("container: trailing bytes");
  return c;
}

EncodeResult encode(const Image& x, int tau, const ModelWeights& w, bool use_bias_correction) {
  if (tau < 0 || tau > kMaxTau) throw std::invalid_argument("encode: tau out of {0..5}");
  require_weights(w);

  const BlockTransformConfig lossy_cfg;  // the pipeline's fixed base codec
  auto [lossy_payload, xt] = encode_lossy(x, lossy_cfg);
  const ResidualPlane r = compute_residual(x, xt);
  const ResidualPlane rq = tau == 0 ? r : quantize_residual_plane(r, tau);

  const FeatureMap u = extract_feature(xt, w);
  const ContextMap ctx = extract_context(rq, w);
  const std::optional<int> condition =
      (tau > 0 && use_bias_correction) ? std::optional<int>(tau) : std::nullopt;
  const detail::EstimatorRefs est = detail::bind_estimator(w, condition);

  const std::vector<int> alphabet = quantized_alphabet(tau);
  const int bin = 2 * tau + 1;

  ByteSink sink;
  RangeEncoder enc(sink);
  double model_bits = 0.0, table_bits = 0.0;
  double tin[kTrunkChannels];
  PixelParams pp;
  for (uint32_t y = 0; y < x.height; ++y) {
    for (uint32_t px = 0; px < x.width; ++px) {
      for (int ch = 0; ch < kFeatureChannels; ++ch) {
        tin[ch] = u.at(y, px, ch);
        tin[kFeatureChannels + ch] = ctx.at(y, px, ch);
      }
      detail::estimator_forward_pixel(est, tin, &pp, nullptr);
      const int q1 = rq.at(y, px, 0);
      const int q2 = rq.at(y, px, 1);
      for (int c = 0; c < 3; ++c) {
        const std::vector<double> pmf = channel_dist(pp, c, q1, q2, tau);
        const size_t sym = static_cast<size_t>((rq.at(y, px, c) - alphabet[0]) / bin);
        double sum = 0.0;
        for (double p : pmf) sum += p;
        model_bits += -std::log2(std::max(pmf[sym] / sum, 1e-300));
        const FreqTable tbl = build_freq_table(pmf);
        table_bits += -std::log2(tbl.freq(sym) / static_cast<double>(kFreqTotal));
        enc.encode(tbl, sym);
      }
    }
  }
  enc.finish();

  EncodeResult out;
  out.container.width = x.width;
  out.container.height = x.height;
  out.container.tau = static_cast<uint8_t>(tau);
  out.container.flags = condition ? CodedContainer::kFlagBiasCorrected : 0;
  out.container.weights_fingerprint = w.fingerprint();
  out.container.lossy_payload = std::move(lossy_payload);
  out.container.residual_payload = sink.take();
  out.lossy = std::move(xt);
  out.reconstruction = reconstruct_image(out.lossy, rq);

  const double subpixels = 3.0 * x.width * x.height;
  out.report.bpsp_total = out.container.serialize().size() * 8.0 / subpixels;
  out.report.bpsp_lossy = out.container.lossy_payload.size() * 8.0 / subpixels;
  out.report.bpsp_residual = out.container.residual_payload.size() * 8.0 / subpixels;
  out.report.psnr_lossy = psnr(x, out.lossy);
  int linf = 0;
  for (size_t i = 0; i < x.pixels.size(); ++i) {
    linf = std::max(linf,
                    std::abs(static_cast<int>(x.pixels[i]) -
                             static_cast<int>(out.reconstruction.pixels[i])));
  }
  out.report.linf = linf;
  out.report.residual_model_bits = model_bits;
  out.report.residual_table_bits = table_bits;
  return out;
}

Image decode(const CodedContainer& c, const ModelWeights& w) {
  require_weights(w);
  if (c.tau > kMaxTau) throw std::invalid_argument("decode: tau out of range");
  if (c.weights_fingerprint != w.fingerprint()) {
    throw std::invalid_argument("decode: weights fingerprint mismatch");
  }

  const BlockTransformConfig lossy_cfg;
  const Image xt = decode_lossy(c.lossy_payload, lossy_cfg);
  if (xt.width != c.width || xt.height != c.height) {
    throw std::invalid_argument("decode: lossy payload dimension mismatch");
  }

  const int tau = c.tau;
  const FeatureMap u = extract_feature(xt, w);
  const std::optional<int> condition =
      (tau > 0 && (c.flags & CodedContainer::kFlagBiasCorrected)) ? std::optional<int>(tau)
                                                                  : std::nullopt;
  const detail::EstimatorRefs est = detail::bind_estimator(w, condition);
  const std::vector<int> alphabet = quantized_alphabet(tau);

  ByteSource src(c.residual_payload.data(), c.residual_payload.size());
  RangeDecoder dec(src);
  ResidualPlane rdec(c.height, c.width);
  double ctx64[kFeatureChannels];
  double tin[kTrunkChannels];
  PixelParams pp;
  for (uint32_t y = 0; y < c.height; ++y) {
    for (uint32_t px = 0; px < c.width; ++px) {
      // Context features depend only on raster-earlier positions, which
      // are already decoded; unseen taps are structural zeros.
      context_features_at(rdec, w, y, px, ctx64);
      for (int ch = 0; ch < kFeatureChannels; ++ch) {
        tin[ch] = u.at(y, px, ch);
        tin[kFeatureChannels + ch] = ctx64[ch];
      }
      detail::estimator_forward_pixel(est, tin, &pp, nullptr);
      for (int ch = 0; ch < 3; ++ch) {
        const int q1 = rdec.at(y, px, 0);
        const int q2 = rdec.at(y, px, 1);
        const std::vector<double> pmf = channel_dist(pp, ch, q1, q2, tau);
        const FreqTable tbl = build_freq_table(pmf);
        const size_t sym = dec.decode(tbl);
        rdec.set(y, px, ch, alphabet[sym]);
      }
    }
  }
  return reconstruct_image(xt, rdec);
}

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("psnr: dimension mismatch");
  }
  double sq = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    sq += d * d;
  }
  if (sq == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sq / static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

VerifyReport verify(const Image& x, const Image& xhat, int tau) {
  if (x.width != xhat.width || x.height != xhat.height) {
    throw std::invalid_argument("verify: dimension mismatch");
  }
  if (tau < 0 || tau > kMaxTau) throw std::invalid_argument("verify: tau out of {0..5}");
  VerifyReport rep;
  for (size_t i = 0; i < x.pixels.size(); ++i) {
    rep.linf = std::max(
        rep.linf, std::abs(static_cast<int>(x.pixels[i]) - static_cast<int>(xhat.pixels[i])));
  }
  rep.psnr = psnr(x, xhat);
  rep.pass = rep.linf <= tau;
  return rep;
}

double ideal_instrumented_bits(const Image& x, int tau, const ModelWeights& w) {
  if (tau < 1 || tau > kMaxTau) {
    throw std::invalid_argument("ideal_instrumented_bits: tau out of {1..5}");
  }
  require_weights(w);
  const BlockTransformConfig lossy_cfg;
  auto [lossy_payload, xt] = encode_lossy(x, lossy_cfg);
  (void)lossy_payload;
  const ResidualPlane r = compute_residual(x, xt);
  const ResidualPlane rq = quantize_residual_plane(r, tau);
  const FeatureMap u = extract_feature(xt, w);
  const ContextMap ctx = extract_context(r, w);  // true-residual context
  const detail::EstimatorRefs est = detail::bind_estimator(w, std::nullopt);
  const std::vector<int> alphabet = quantized_alphabet(tau);
  const int bin = 2 * tau + 1;

  double bits = 0.0;
  double tin[kTrunkChannels];
  PixelParams pp;
  for (uint32_t y = 0; y < x.height; ++y) {
    for (uint32_t px = 0; px < x.width; ++px) {
      for (int ch = 0; ch < kFeatureChannels; ++ch) {
        tin[ch] = u.at(y, px, ch);
        tin[kFeatureChannels + ch] = ctx.at(y, px, ch);
      }
      detail::estimator_forward_pixel(est, tin, &pp, nullptr);
      const int r1 = r.at(y, px, 0);
      const int r2 = r.at(y, px, 1);
      for (int c = 0; c < 3; ++c) {
        const std::vector<double> pmf = channel_dist(pp, c, r1, r2, tau);
        double sum = 0.0;
        for (double p : pmf) sum += p;
        const size_t sym = static_cast<size_t>((rq.at(y, px, c) - alphabet[0]) / bin);
        bits += -std::log2(std::max(pmf[sym] / sum, 1e-300));
      }
    }
  }
  return bits;
}

}  // namespace nlrc
