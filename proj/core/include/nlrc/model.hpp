// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#ifndef NLRC_MODEL_HPP_
#define NLRC_MODEL_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "nlrc/image.hpp"
#include "nlrc/quantizer.hpp"
#include "nlrc/weights.hpp"

namespace nlrc {

inline constexpr double kSigmaMin = 1e-3;

// Channel-interleaved plane of doubles.
struct Plane {
  uint32_t h = 0, w = 0, c = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(uint32_t h_, uint32_t w_, uint32_t c_)
      : h(h_), w(w_), c(c_), v(static_cast<size_t>(h_) * w_ * c_, 0.0) {}

  double& at(uint32_t y, uint32_t x, uint32_t ch) {
    return v[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  double at(uint32_t y, uint32_t x, uint32_t ch) const {
    return v[(static_cast<size_t>(y) * w + x) * c + ch];
  }
};

using FeatureMap = Plane;  // 64 channels derived from the lossy image
using ContextMap = Plane;  // 64 channels derived from earlier residuals

// Per-pixel signed residuals, three channels interleaved.
struct ResidualPlane {
  uint32_t h = 0, w = 0;
  std::vector<int16_t> v;

  ResidualPlane() = default;
  ResidualPlane(uint32_t h_, uint32_t w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_ * 3, 0) {}

  int at(uint32_t y, uint32_t x, int ch) const {
    return v[(static_cast<size_t>(y) * w + x) * 3 + ch];
  }
  void set(uint32_t y, uint32_t x, int ch, int val) {
    v[(static_cast<size_t>(y) * w + x) * 3 + ch] = static_cast<int16_t>(val);
  }
};

ResidualPlane compute_residual(const Image& x, const Image& xt);
ResidualPlane quantize_residual_plane(const ResidualPlane& r, int tau);

// Logistic mixture parameters for one pixel: per channel c, K weights on
// the simplex, K means, K scales >= kSigmaMin, and the three coupling
// coefficients that let later channels shift their means by earlier
// residual values.
struct PixelParams {
  double pi[3][kMixtureK];
  double mu[3][kMixtureK];
  double sigma[3][kMixtureK];
  double beta[3];
};

struct MixtureParams {
  uint32_t h = 0, w = 0;
  std::vector<PixelParams> p;

  PixelParams& at(uint32_t y, uint32_t x) { return p[static_cast<size_t>(y) * w + x]; }
  const PixelParams& at(uint32_t y, uint32_t x) const {
    return p[static_cast<size_t>(y) * w + x];
  }
};

// Two 3x3 convolutions (64 channels, softplus between) over the lossy
// image; everything the decoder needs to rebuild it is transmitted.
FeatureMap extract_feature(const Image& xt, const ModelWeights& w);

// 5x5 masked convolution over the residual plane.  Strictly causal:
// position (y,x) sees only raster-earlier residuals.
ContextMap extract_context(const ResidualPlane& r, const ModelWeights& w);

// Single-position context features, summed in the same order as
// extract_context so incremental decoding reproduces encoder values bit
// for bit.  out must hold 64 doubles.
void context_features_at(const ResidualPlane& r, const ModelWeights& w, uint32_t y, uint32_t x,
                         double* out);

// Mixture parameter estimation.  condition == nullopt selects the plain
// estimator; condition == tau in {1..5} selects the tau-conditioned one.
// condition == 0 is an error: the lossless path always uses the plain
// estimator.
MixtureParams estimate_params(const FeatureMap& u, const ContextMap& ctx, const ModelWeights& w,
                              std::optional<int> condition);
void estimate_params_at(const double* u64, const double* ctx64, const ModelWeights& w,
                        std::optional<int> condition, PixelParams* out);

// Returns a copy with channel-2 and channel-3 means shifted by the coded
// residuals of the earlier channels: mu2 += b1*r1, mu3 += b2*r1 + b3*r2.
PixelParams autoregress_means(const PixelParams& p, int r1, int r2);

// Discrete logistic mixture over [-255, 255]: mass at v is the mixture
// CDF difference across [v-0.5, v+0.5], with the boundary masses absorbing
// the tails so the total is exactly one.
std::vector<double> discrete_pmf(const double* mu, const double* sigma, const double* pi);

// Single-symbol mass of the same distribution (training fast path).
double discrete_pmf_mass(const double* mu, const double* sigma, const double* pi, int v);

// Distribution over quantized_alphabet(tau): each bin takes the mixture
// CDF mass of its residual range.  Equal to collapsing discrete_pmf over
// the quantizer bins, computed directly from shared bin edges.
std::vector<double> quantized_bin_pmf(const double* mu, const double* sigma, const double* pi,
                                      int tau);

// Total bits of the targets under the model, coded in raster order and
// channel order 1->2->3.  chain supplies the residual values earlier
// channels condition on (the decoded quantized values at tau > 0; equal
// to targets at tau = 0).
double nll_bits(const ResidualPlane& targets, const ResidualPlane& chain, const FeatureMap& u,
                const ContextMap& ctx, const ModelWeights& w, std::optional<int> condition);
double nll_bits(const ResidualPlane& r, const FeatureMap& u, const ContextMap& ctx,
                const ModelWeights& w, std::optional<int> condition);

// Bits of the true residual under the tau-conditioned estimator evaluated
// in decoder conditions (quantized context and channel chain), minus the
// bits under the plain estimator in encoder conditions.  Both contexts
// are derived internally from w.  The subtracted term is a constant for
// optimization: gradients reach only the conditional estimator tensors.
double bias_correction_loss(const ResidualPlane& r, const ResidualPlane& rq, const FeatureMap& u,
                            const ModelWeights& w, int tau);

enum class LossKind {
  kPlainNll,        // targets under plain estimator, true context
  kCondNll,         // targets under conditioned estimator, quantized context
  kBiasCorrection,  // kCondNll minus constant kPlainNll; cond gradients only
};

struct BackwardResult {
  double loss_bits = 0.0;
  GradientSet grads;
};

// Forward plus exact reverse-mode gradients for every trainable tensor
// touched by the selected loss.  rq is ignored for kPlainNll; tau is
// required for the other two kinds.  Non-causal context taps are
// structural zeros, so their gradient entries are reported as zero.
BackwardResult backward(LossKind kind, const Image& xt, const ResidualPlane& r,
                        const ResidualPlane& rq, std::optional<int> tau, const ModelWeights& w);

// Fused training pass sharing one feature extraction: main loss (plain
// estimator on true residuals) with full gradients, plus the bias
// correction loss at the given tau with gradients restricted to the
// conditional estimator.  Gradient sums match running the two backward
// kinds separately.
struct TrainStepGradients {
  double main_bits = 0.0;
  double bias_bits = 0.0;
  GradientSet grads;
};
TrainStepGradients train_losses_backward(const Image& xt, const ResidualPlane& r, int tau,
                                         const ModelWeights& w);

}  // namespace nlrc

#endif  // NLRC_MODEL_HPP_
