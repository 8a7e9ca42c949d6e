// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#ifndef NLRC_PIPELINE_HPP_
#define NLRC_PIPELINE_HPP_

#include <cstdint>
#include <vector>

#include "nlrc/image.hpp"
#include "nlrc/lossy.hpp"
#include "nlrc/weights.hpp"

namespace nlrc {

// On-disk frame: fixed header followed by the two length-prefixed
// payloads.  Integers little-endian; layout documented byte-exactly in
// docs/formats.md.
struct CodedContainer {
  uint32_t width = 0;
  uint32_t height = 0;
  uint8_t tau = 0;
  uint8_t flags = 0;  // bit0: residual stream coded by the tau-conditioned estimator
  Sha256 weights_fingerprint{};
  std::vector<uint8_t> lossy_payload;
  std::vector<uint8_t> residual_payload;

  static constexpr uint8_t kFlagBiasCorrected = 0x01;

  std::vector<uint8_t> serialize() const;
  static CodedContainer parse(const std::vector<uint8_t>& bytes);
};

struct EncodeReport {
  double bpsp_total = 0.0;     // full container bits / (3*H*W)
  double bpsp_lossy = 0.0;     // lossy payload bits / (3*H*W)
  double bpsp_residual = 0.0;  // residual payload bits / (3*H*W)
  double psnr_lossy = 0.0;     // PSNR(x, lossy reconstruction), +inf when equal
  int linf = 0;                // max |x - reconstruction| over all subpixels

  // Ideal code length of the coded symbols under the model's own
  // distributions, and under the 16-bit tables actually driving the
  // coder.  The payload length is sandwiched by these up to framing.
  double residual_model_bits = 0.0;
  double residual_table_bits = 0.0;
};

struct EncodeResult {
  CodedContainer container;
  EncodeReport report;
  Image lossy;           // x-tilde, the base layer both sides reconstruct
  Image reconstruction;  // x-hat the decoder will produce
};

// Full encode at the given error bound.  tau = 0 codes the residuals
// losslessly with the plain estimator.  For tau > 0 the context plane and
// channel conditioning always come from the quantized residuals (the
// decoder has nothing else); use_bias_correction selects the
// tau-conditioned estimator instead of the plain one.
EncodeResult encode(const Image& x, int tau, const ModelWeights& w, bool use_bias_correction);

// Rebuilds the reconstruction from a container.  Throws on magic,
// version, or weights-fingerprint mismatch and on truncated payloads.
Image decode(const CodedContainer& c, const ModelWeights& w);

struct VerifyReport {
  int linf = 0;
  double psnr = 0.0;  // +inf when the images are identical
  bool pass = false;
};

// Checks |x - xhat| <= tau per subpixel and reports the error metrics.
VerifyReport verify(const Image& x, const Image& xhat, int tau);

// Mean-square-error PSNR over all subpixels against peak 255; +inf for
// identical images.
double psnr(const Image& a, const Image& b);

// Hypothetical residual bits at tau >= 1 when the plain estimator is fed
// the true-residual context it was trained on.  No decoder can rebuild
// that context, so nothing is emitted; this is a reporting reference
// only.
double ideal_instrumented_bits(const Image& x, int tau, const ModelWeights& w);

}  // namespace nlrc

#endif  // NLRC_PIPELINE_HPP_
