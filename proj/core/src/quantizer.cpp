// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include "nlrc/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace nlrc {

int quantize_residual(int r, int tau) {
  if (r < kResidualMin || r > kResidualMax) {
    throw std::invalid_argument("quantize_residual: residual out of [-255,255]");
  }
  if (tau < 0 || tau > 5) {
    throw std::invalid_argument("quantize_residual: tau out of {0..5}");
  }
  const int bin = 2 * tau + 1;
  const int sign = r < 0 ? -1 : 1;
  return sign * bin * ((std::abs(r) + tau) / bin);
}

std::vector<int> quantized_alphabet(int tau) {
  bool seen[kResidualCount] = {};
  for (int r = kResidualMin; r <= kResidualMax; ++r) {
    seen[residual_to_index(quantize_residual(r, tau))] = true;
  }
  std::vector<int> out;
  for (int i = 0; i < kResidualCount; ++i) {
    if (seen[i]) out.push_back(index_to_residual(i));
  }
  return out;
}

std::vector<double> quantize_pmf(const std::vector<double>& pmf, int tau) {
  if (pmf.size() != kResidualCount) {
    throw std::invalid_argument("quantize_pmf: expected 511-bin input");
  }
  const std::vector<int> alphabet = quantized_alphabet(tau);
  std::vector<double> out(alphabet.size());
  for (size_t i = 0; i < alphabet.size(); ++i) {
    const int lo = std::max(alphabet[i] - tau, kResidualMin);
    const int hi = std::min(alphabet[i] + tau, kResidualMax);
    double sum = 0.0;
    for (int v = lo; v <= hi; ++v) sum += pmf[residual_to_index(v)];
    out[i] = sum;
  }
  return out;
}

double entropy_bits(const std::vector<double>& pmf) {
  double h = 0.0;
  for (double p : pmf) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

double self_info_bits(const std::vector<double>& pmf, size_t index) {
  if (index >= pmf.size()) {
    throw std::invalid_argument("self_info_bits: index out of range");
  }
  return -std::log2(std::max(pmf[index], 1e-300));
}

uint8_t reconstruct_pixel(uint8_t base, int residual) {
  return static_cast<uint8_t>(std::clamp(static_cast<int>(base) + residual, 0, 255));
}

}  // namespace nlrc
