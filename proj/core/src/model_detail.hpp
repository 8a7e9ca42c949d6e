// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

// Shared internals of the entropy model: numerically stable scalar
// nonlinearities, bound tensor references, and the per-pixel estimator
// kernel used identically by encoding, decoding, and training.

#ifndef NLRC_SRC_MODEL_DETAIL_HPP_
#define NLRC_SRC_MODEL_DETAIL_HPP_

#include <cmath>
#include <optional>

#include "nlrc/model.hpp"
#include "nlrc/weights.hpp"

namespace nlrc::detail {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

inline double norm_sample(uint8_t v) { return (v - 127.5) / 127.5; }
inline double norm_residual(int r) { return r / 255.0; }

struct LayerRefs {
  const Tensor* w = nullptr;
  const Tensor* b = nullptr;
  const Tensor* s = nullptr;  // per-tau scale rows (conditional only)
  const Tensor* t = nullptr;  // per-tau shift rows
};

struct EstimatorRefs {
  LayerRefs fc1, fc2, pi, mu, sg, bt;
  bool cond = false;
  int tau_row = 0;  // tau - 1 when cond
};

// condition == nullopt binds the plain estimator; 1..5 the conditional
// one.  condition == 0 throws: lossless coding always uses the plain
// estimator.
EstimatorRefs bind_estimator(const ModelWeights& w, std::optional<int> condition);

// Pre-modulation linear outputs and post-nonlinearity activations kept
// for reverse mode.
struct PixelTrace {
  double lin1[kTrunkChannels];
  double z1[kTrunkChannels];
  double lin2[kTrunkChannels];
  double z2[kTrunkChannels];
  double linp[3 * kMixtureK];
  double linm[3 * kMixtureK];
  double lins[3 * kMixtureK];
  double linb[3];
};

// tin is the 128-wide concatenation of feature and context channels.
void estimator_forward_pixel(const EstimatorRefs& e, const double* tin, PixelParams* out,
                             PixelTrace* trace);

inline void apply_mod(const LayerRefs& l, bool cond, int row, const double* lin, double* out,
                      int n) {
  if (!cond) {
    for (int i = 0; i < n; ++i) out[i] = lin[i];
  } else {
    const double* s = l.s->data() + static_cast<size_t>(row) * n;
    const double* t = l.t->data() + static_cast<size_t>(row) * n;
    for (int i = 0; i < n; ++i) out[i] = s[i] * lin[i] + t[i];
  }
}

Plane image_norm_plane(const Image& img);
Plane residual_norm_plane(const ResidualPlane& r);

// 3x3 zero-padded convolution, fixed (oc, ic, ky, kx) summation order.
void conv3x3_forward(const Plane& in, const Tensor& w, const Tensor& b, Plane* out);

}  // namespace nlrc::detail

#endif  // NLRC_SRC_MODEL_DETAIL_HPP_
