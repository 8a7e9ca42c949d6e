// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "model_detail.hpp"
#include "nlrc/model.hpp"

namespace nlrc {

namespace detail {

EstimatorRefs bind_estimator(const ModelWeights& w, std::optional<int> condition) {
  EstimatorRefs e;
  if (condition.has_value()) {
    if (*condition == 0) {
      throw std::invalid_argument(
          "estimator condition 0 is invalid: lossless coding uses the plain estimator");
    }
    if (*condition < 1 || *condition > kMaxTau) {
      throw std::invalid_argument("estimator condition out of {1..5}");
    }
    e.cond = true;
    e.tau_row = *condition - 1;
  }
  const std::string p = e.cond ? "cond" : "plain";
  auto bind = [&](const char* layer) {
    LayerRefs l;
    l.w = &w.t(p + "." + layer + ".w");
    l.b = &w.t(p + "." + layer + ".b");
    if (e.cond) {
      l.s = &w.t(p + "." + layer + ".s");
      l.t = &w.t(p + "." + layer + ".t");
    }
    return l;
  };
  e.fc1 = bind("fc1");
  e.fc2 = bind("fc2");
  e.pi = bind("pi");
  e.mu = bind("mu");
  e.sg = bind("sg");
  e.bt = bind("bt");
  return e;
}

namespace {

void matvec(const Tensor& w, const Tensor& b, const double* x, double* out, int rows, int cols) {
  const double* wd = w.data();
  for (int j = 0; j < rows; ++j) {
    double acc = b[static_cast<size_t>(j)];
    const double* row = wd + static_cast<size_t>(j) * cols;
    for (int i = 0; i < cols; ++i) acc += row[i] * x[i];
    out[j] = acc;
  }
}

}  // namespace

void estimator_forward_pixel(const EstimatorRefs& e, const double* tin, PixelParams* out,
                             PixelTrace* trace) {
  PixelTrace local;
  PixelTrace& tr = trace ? *trace : local;
  const int T = kTrunkChannels;
  const int H = 3 * kMixtureK;

  double a[kTrunkChannels];
  matvec(*e.fc1.w, *e.fc1.b, tin, tr.lin1, T, T);
  apply_mod(e.fc1, e.cond, e.tau_row, tr.lin1, a, T);
  for (int j = 0; j < T; ++j) tr.z1[j] = softplus(a[j]);

  matvec(*e.fc2.w, *e.fc2.b, tr.z1, tr.lin2, T, T);
  apply_mod(e.fc2, e.cond, e.tau_row, tr.lin2, a, T);
  for (int j = 0; j < T; ++j) tr.z2[j] = softplus(a[j]);

  matvec(*e.pi.w, *e.pi.b, tr.z2, tr.linp, H, T);
  matvec(*e.mu.w, *e.mu.b, tr.z2, tr.linm, H, T);
  matvec(*e.sg.w, *e.sg.b, tr.z2, tr.lins, H, T);
  matvec(*e.bt.w, *e.bt.b, tr.z2, tr.linb, 3, T);

  double ap[3 * kMixtureK], am[3 * kMixtureK], as[3 * kMixtureK], ab[3];
  apply_mod(e.pi, e.cond, e.tau_row, tr.linp, ap, H);
  apply_mod(e.mu, e.cond, e.tau_row, tr.linm, am, H);
  apply_mod(e.sg, e.cond, e.tau_row, tr.lins, as, H);
  apply_mod(e.bt, e.cond, e.tau_row, tr.linb, ab, 3);

  for (int c = 0; c < 3; ++c) {
    const double* lc = ap + c * kMixtureK;
    double mx = lc[0];
    for (int k = 1; k < kMixtureK; ++k) mx = std::max(mx, lc[k]);
    double sum = 0.0;
    double ex[kMixtureK];
    for (int k = 0; k < kMixtureK; ++k) {
      ex[k] = std::exp(lc[k] - mx);
      sum += ex[k];
    }
    for (int k = 0; k < kMixtureK; ++k) {
      out->pi[c][k] = ex[k] / sum;
      out->mu[c][k] = am[c * kMixtureK + k];
      out->sigma[c][k] = softplus(as[c * kMixtureK + k]) + kSigmaMin;
    }
    out->beta[c] = ab[c];
  }
}

}  // namespace detail

void estimate_params_at(const double* u64, const double* ctx64, const ModelWeights& w,
                        std::optional<int> condition, PixelParams* out) {
  const detail::EstimatorRefs e = detail::bind_estimator(w, condition);
  double tin[kTrunkChannels];
  std::copy(u64, u64 + kFeatureChannels, tin);
  std::copy(ctx64, ctx64 + kFeatureChannels, tin + kFeatureChannels);
  detail::estimator_forward_pixel(e, tin, out, nullptr);
}

MixtureParams estimate_params(const FeatureMap& u, const ContextMap& ctx, const ModelWeights& w,
                              std::optional<int> condition) {
  if (u.h != ctx.h || u.w != ctx.w) {
    throw std::invalid_argument("estimate_params: feature/context dimension mismatch");
  }
  const detail::EstimatorRefs e = detail::bind_estimator(w, condition);
  MixtureParams mp;
  mp.h = u.h;
  mp.w = u.w;
  mp.p.resize(static_cast<size_t>(u.h) * u.w);
  double tin[kTrunkChannels];
  for (uint32_t y = 0; y < u.h; ++y) {
    for (uint32_t x = 0; x < u.w; ++x) {
      const double* up = u.v.data() + (static_cast<size_t>(y) * u.w + x) * u.c;
      const double* cp = ctx.v.data() + (static_cast<size_t>(y) * ctx.w + x) * ctx.c;
      std::copy(up, up + kFeatureChannels, tin);
      std::copy(cp, cp + kFeatureChannels, tin + kFeatureChannels);
      detail::estimator_forward_pixel(e, tin, &mp.at(y, x), nullptr);
    }
  }
  return mp;
}

}  // namespace nlrc
