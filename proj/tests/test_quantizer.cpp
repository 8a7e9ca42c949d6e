// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "nlrc/quantizer.hpp"
#include "testutil.hpp"

using nlrc::entropy_bits;
using nlrc::quantize_pmf;
using nlrc::quantize_residual;
using nlrc::quantized_alphabet;

TEST_CASE("quantize_residual pinned values") {
  for (int tau = 0; tau <= 5; ++tau) CHECK(quantize_residual(0, tau) == 0);
  CHECK(quantize_residual(2, 1) == 3);
  CHECK(quantize_residual(-4, 2) == -5);
  CHECK(quantize_residual(1, 1) == 0);
  CHECK(quantize_residual(255, 5) == 253);
  CHECK(quantize_residual(-255, 0) == -255);
}

TEST_CASE("quantize_residual error bound, idempotence, and symmetry over the full domain") {
  for (int tau = 0; tau <= 5; ++tau) {
    for (int r = -255; r <= 255; ++r) {
      const int q = quantize_residual(r, tau);
      CHECK(std::abs(r - q) <= tau);
      CHECK(quantize_residual(q, tau) == q);
      CHECK(quantize_residual(-r, tau) == -q);
      CHECK(q % (2 * tau + 1) == 0);
    }
  }
}

TEST_CASE("quantized_alphabet is exactly the quantizer image, ascending") {
  SUBCASE("tau 0 is the identity alphabet") {
    const std::vector<int> a = quantized_alphabet(0);
    REQUIRE(a.size() == 511);
    CHECK(a.front() == -255);
    CHECK(a.back() == 255);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == -255 + static_cast<int>(i));
  }
  SUBCASE("tau 1 multiples of three") {
    const std::vector<int> a = quantized_alphabet(1);
    REQUIRE(a.size() == 171);
    CHECK(a.front() == -255);
    CHECK(a.back() == 255);
    for (int v : a) CHECK(v % 3 == 0);
  }
  SUBCASE("tau 2 multiples of five") {
    const std::vector<int> a = quantized_alphabet(2);
    REQUIRE(a.size() == 103);
    for (int v : a) CHECK(v % 5 == 0);
  }
  SUBCASE("enumeration oracle for every tau") {
    for (int tau = 0; tau <= 5; ++tau) {
      std::set<int> image;
      for (int r = -255; r <= 255; ++r) image.insert(quantize_residual(r, tau));
      const std::vector<int> a = quantized_alphabet(tau);
      REQUIRE(a.size() == image.size());
      CHECK(std::is_sorted(a.begin(), a.end()));
      CHECK(std::equal(a.begin(), a.end(), image.begin()));
    }
  }
}

TEST_CASE("quantize_pmf collapses bins per the windowed-sum oracle") {
  SUBCASE("tau 0 identity") {
    std::mt19937_64 rng(3);
    const std::vector<double> p = testutil::random_pmf(rng, 511, 0);
    CHECK(quantize_pmf(p, 0) == p);
  }
  SUBCASE("uniform on {-1,0,1} concentrates at zero for tau 1") {
    std::vector<double> p(511, 0.0);
    p[nlrc::residual_to_index(-1)] = 1.0 / 3.0;
    p[nlrc::residual_to_index(0)] = 1.0 / 3.0;
    p[nlrc::residual_to_index(1)] = 1.0 / 3.0;
    const std::vector<double> q = quantize_pmf(p, 1);
    const std::vector<int> a = quantized_alphabet(1);
    REQUIRE(q.size() == a.size());
    const size_t zero_at =
        static_cast<size_t>(std::find(a.begin(), a.end(), 0) - a.begin());
    for (size_t i = 0; i < q.size(); ++i) {
      CHECK(q[i] == doctest::Approx(i == zero_at ? 1.0 : 0.0).epsilon(1e-12));
    }
  }
  SUBCASE("random distributions against direct window sums") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 60; ++trial) {
      const std::vector<double> p = testutil::random_pmf(rng, 511, trial % 3);
      for (int tau = 1; tau <= 5; ++tau) {
        const std::vector<int> a = quantized_alphabet(tau);
        const std::vector<double> q = quantize_pmf(p, tau);
        REQUIRE(q.size() == a.size());
        double total = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
          double want = 0.0;
          for (int v = a[i] - tau; v <= a[i] + tau; ++v) {
            if (v >= -255 && v <= 255) want += p[nlrc::residual_to_index(v)];
          }
          CHECK(q[i] == doctest::Approx(want).epsilon(1e-12));
          total += q[i];
        }
        CHECK(std::fabs(total - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("bin collapse never increases entropy") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> p = testutil::random_pmf(rng, 511, trial % 3);
    const double before = entropy_bits(p);
    for (int tau = 0; tau <= 5; ++tau) {
      CHECK(entropy_bits(quantize_pmf(p, tau)) <= before + 1e-9);
    }
  }
}

TEST_CASE("entropy_bits closed forms") {
  CHECK(entropy_bits({0.25, 0.25, 0.25, 0.25}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(entropy_bits({0.0, 1.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(entropy_bits({0.5, 0.25, 0.25}) == doctest::Approx(1.5).epsilon(1e-12));
  std::mt19937_64 rng(5);
  const std::vector<double> p = testutil::random_pmf(rng, 100, 0);
  CHECK(entropy_bits(p) == doctest::Approx(testutil::oracle_entropy_bits(p)).epsilon(1e-12));
}

TEST_CASE("self_info_bits of a symbol") {
  const std::vector<double> p{0.5, 0.25, 0.125, 0.125};
  CHECK(nlrc::self_info_bits(p, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(nlrc::self_info_bits(p, 2) == doctest::Approx(3.0).epsilon(1e-12));
  // Uniform distribution: every symbol costs log2(n); the planewise sum
  // of a uniform model is therefore count * log2(511).
  const std::vector<double> u(511, 1.0 / 511.0);
  double total = 0.0;
  for (int i = 0; i < 511; ++i) total += nlrc::self_info_bits(u, i);
  CHECK(total == doctest::Approx(511.0 * std::log2(511.0)).epsilon(1e-12));
  // Zero mass stays finite, out-of-range throws.
  CHECK(std::isfinite(nlrc::self_info_bits({1.0, 0.0}, 1)));
  CHECK_THROWS(nlrc::self_info_bits(p, 4));
}

TEST_CASE("reconstruct_pixel clamps and preserves the error bound") {
  CHECK(nlrc::reconstruct_pixel(100, 3) == 103);
  CHECK(nlrc::reconstruct_pixel(254, 3) == 255);
  CHECK(nlrc::reconstruct_pixel(1, -3) == 0);
  CHECK(nlrc::reconstruct_pixel(0, -255) == 0);
  CHECK(nlrc::reconstruct_pixel(255, 255) == 255);

  // Exhaustive: for every original sample, base sample, and bound, the
  // clamped reconstruction stays within tau of the original.
  for (int tau = 0; tau <= 5; ++tau) {
    for (int x = 0; x <= 255; ++x) {
      for (int base = 0; base <= 255; ++base) {
        const int rq = quantize_residual(x - base, tau);
        const int xhat = nlrc::reconstruct_pixel(static_cast<uint8_t>(base), rq);
        CHECK(std::abs(x - xhat) <= tau);
      }
    }
  }
}
