// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#ifndef NLRC_QUANTIZER_HPP_
#define NLRC_QUANTIZER_HPP_

#include <cstdint>
#include <vector>

namespace nlrc {

// Residuals live in [-255, 255]: 511 possible values.
inline constexpr int kResidualMin = -255;
inline constexpr int kResidualMax = 255;
inline constexpr int kResidualCount = 511;

// Maps a residual value to its index in the full alphabet and back.
inline int residual_to_index(int r) { return r - kResidualMin; }
inline int index_to_residual(int i) { return i + kResidualMin; }

// Uniform mid-tread quantizer with bin size 2*tau+1:
//   q(r) = sgn(r) * (2*tau+1) * floor((|r| + tau) / (2*tau+1))
// Any residual moves by at most tau, which caps the reconstruction error
// of base + quantized residual at tau per channel.  tau = 0 is identity.
int quantize_residual(int r, int tau);

// The image of quantize_residual over [-255, 255], ascending.  These are
// the only symbols the residual coder ever has to represent.
std::vector<int> quantized_alphabet(int tau);

// Collapses a 511-bin residual distribution to the quantized alphabet:
// bin r_hat receives the total mass of [r_hat - tau, r_hat + tau] clipped
// to [-255, 255].  Bins tile the range exactly, so mass is conserved.
// Input and output are indexed by residual_to_index / quantized_alphabet
// position respectively.
std::vector<double> quantize_pmf(const std::vector<double>& pmf, int tau);

// Shannon entropy in bits; zero-probability entries contribute nothing.
double entropy_bits(const std::vector<double>& pmf);

// -log2 of the mass one distribution entry assigns: the ideal code length
// of that symbol.  Zero mass is floored to keep the result finite.
double self_info_bits(const std::vector<double>& pmf, size_t index);

// Clamped reconstruction of one channel sample from base + residual.
uint8_t reconstruct_pixel(uint8_t base, int residual);

}  // namespace nlrc

#endif  // NLRC_QUANTIZER_HPP_
