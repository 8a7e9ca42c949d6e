// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include <algorithm>
#include <stdexcept>

#include "model_detail.hpp"
#include "nlrc/model.hpp"

namespace nlrc {

namespace {

// Mixture CDF evaluated at a half-integer boundary.
double mixture_cdf(const double* mu, const double* sigma, const double* pi, double edge) {
  double acc = 0.0;
  for (int k = 0; k < kMixtureK; ++k) {
    acc += pi[k] * detail::sigmoid((edge - mu[k]) / sigma[k]);
  }
  return acc;
}

const std::vector<int>& cached_alphabet(int tau) {
  static const std::vector<int>* tables = [] {
    auto* t = new std::vector<int>[kMaxTau + 1];
    for (int tau = 0; tau <= kMaxTau; ++tau) t[tau] = quantized_alphabet(tau);
    return t;
  }();
  if (tau < 0 || tau > kMaxTau) throw std::invalid_argument("tau out of {0..5}");
  return tables[tau];
}

}  // namespace

double discrete_pmf_mass(const double* mu, const double* sigma, const double* pi, int v) {
  if (v < kResidualMin || v > kResidualMax) {
    throw std::invalid_argument("discrete_pmf_mass: value out of [-255,255]");
  }
  double acc = 0.0;
  for (int k = 0; k < kMixtureK; ++k) {
    const double hi =
        v == kResidualMax ? 1.0 : detail::sigmoid((v + 0.5 - mu[k]) / sigma[k]);
    const double lo =
        v == kResidualMin ? 0.0 : detail::sigmoid((v - 0.5 - mu[k]) / sigma[k]);
    acc += pi[k] * (hi - lo);
  }
  return acc;
}

std::vector<double> discrete_pmf(const double* mu, const double* sigma, const double* pi) {
  std::vector<double> pmf(kResidualCount);
  for (int v = kResidualMin; v <= kResidualMax; ++v) {
    pmf[residual_to_index(v)] = discrete_pmf_mass(mu, sigma, pi, v);
  }
  return pmf;
}

std::vector<double> quantized_bin_pmf(const double* mu, const double* sigma, const double* pi,
                                      int tau) {
  const std::vector<int>& alphabet = cached_alphabet(tau);
  const size_t n = alphabet.size();
  // Adjacent quantizer bins share their boundary, so one CDF sweep over
  // the n+1 edges gives every bin mass and the edge bins absorb the tails.
  // The mixture weights may sum to one only up to rounding, so clamp the
  // sweep monotone into [0, 1]; every bin mass stays non-negative and the
  // total telescopes to exactly one.
  std::vector<double> edges(n + 1);
  edges[0] = 0.0;
  edges[n] = 1.0;
  for (size_t i = 1; i < n; ++i) {
    const double e = mixture_cdf(mu, sigma, pi, alphabet[i] - tau - 0.5);
    edges[i] = std::clamp(e, edges[i - 1], 1.0);
  }
  std::vector<double> pmf(n);
  for (size_t i = 0; i < n; ++i) pmf[i] = edges[i + 1] - edges[i];
  return pmf;
}

PixelParams autoregress_means(const PixelParams& p, int r1, int r2) {
  PixelParams out = p;
  for (int k = 0; k < kMixtureK; ++k) {
    out.mu[1][k] = p.mu[1][k] + p.beta[0] * r1;
    out.mu[2][k] = p.mu[2][k] + p.beta[1] * r1 + p.beta[2] * r2;
  }
  return out;
}

}  // namespace nlrc
