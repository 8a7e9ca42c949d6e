// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "nlrc/model.hpp"
#include "nlrc/weights.hpp"
#include "testutil.hpp"

using nlrc::backward;
using nlrc::BackwardResult;
using nlrc::extract_context;
using nlrc::extract_feature;
using nlrc::Image;
using nlrc::init_model_weights;
using nlrc::LossKind;
using nlrc::ModelWeights;
using nlrc::nll_bits;
using nlrc::ResidualPlane;

namespace {

ResidualPlane random_residuals(uint32_t h, uint32_t w, uint64_t seed, int lim = 30) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> uni(-lim, lim);
  ResidualPlane r(h, w);
  for (auto& v : r.v) v = static_cast<int16_t>(uni(rng));
  return r;
}

double oracle_nll_sum(const ResidualPlane& targets, const ResidualPlane& chain,
                      const nlrc::Plane& u, const nlrc::Plane& ctx, const ModelWeights& w,
                      std::optional<int> cond) {
  const std::vector<double> terms = testutil::oracle_nll_terms(targets, chain, u, ctx, w, cond);
  return std::accumulate(terms.begin(), terms.end(), 0.0);
}

// Central difference of an arbitrary scalar loss in one weight entry.
double fd_entry(const std::function<double(const ModelWeights&)>& loss, ModelWeights w,
                const std::string& tensor, size_t idx, double h = 1e-3) {
  w.t(tensor)[idx] += h;
  const double hi = loss(w);
  w.t(tensor)[idx] -= 2.0 * h;
  const double lo = loss(w);
  return (hi - lo) / (2.0 * h);
}

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

// Conditional estimator turned into an exact copy of the plain one
// (modulation is already the identity at init).
ModelWeights with_cond_copied_from_plain(ModelWeights w) {
  for (const char* layer : {"fc1", "fc2", "pi", "mu", "sg", "bt"}) {
    w.t(std::string("cond.") + layer + ".w") = w.t(std::string("plain.") + layer + ".w");
    w.t(std::string("cond.") + layer + ".b") = w.t(std::string("plain.") + layer + ".b");
  }
  return w;
}

}  // namespace

TEST_CASE("nll_bits matches the scalar chain-rule oracle") {
  const ModelWeights w = init_model_weights(11);

  SUBCASE("single pixel, hand-walked chain") {
    const Image xt = testutil::synth_natural(1, 1, 3);
    ResidualPlane r(1, 1);
    r.set(0, 0, 0, 7);
    r.set(0, 0, 1, -3);
    r.set(0, 0, 2, 0);
    const auto u = extract_feature(xt, w);
    const auto ctx = extract_context(r, w);
    const double got = nll_bits(r, u, ctx, w, std::nullopt);
    const double want = oracle_nll_sum(r, r, u, ctx, w, std::nullopt);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
  SUBCASE("plain estimator over a textured plane") {
    const Image xt = testutil::synth_natural(7, 5, 4);
    const ResidualPlane r = random_residuals(5, 7, 41);
    const auto u = extract_feature(xt, w);
    const auto ctx = extract_context(r, w);
    const double got = nll_bits(r, u, ctx, w, std::nullopt);
    CHECK(got == doctest::Approx(oracle_nll_sum(r, r, u, ctx, w, std::nullopt)).epsilon(1e-9));
    CHECK(got > 0.0);
    // Two-argument form is the chain == targets case.
    CHECK(nll_bits(r, r, u, ctx, w, std::nullopt) == got);
  }
  SUBCASE("conditioned estimator with quantized context and chain") {
    const Image xt = testutil::synth_natural(6, 6, 5);
    const ResidualPlane r = random_residuals(6, 6, 42);
    for (int tau : {1, 3, 5}) {
      const ResidualPlane rq = nlrc::quantize_residual_plane(r, tau);
      const auto u = extract_feature(xt, w);
      const auto ctx = extract_context(rq, w);
      const double got = nll_bits(r, rq, u, ctx, w, tau);
      CHECK(got == doctest::Approx(oracle_nll_sum(r, rq, u, ctx, w, tau)).epsilon(1e-9));
    }
  }
  SUBCASE("input validation") {
    const Image xt = testutil::synth_natural(4, 4, 6);
    ResidualPlane r = random_residuals(4, 4, 43);
    const auto u = extract_feature(xt, w);
    const auto ctx = extract_context(r, w);
    ResidualPlane bad = r;
    bad.v[5] = 300;
    CHECK_THROWS(nll_bits(bad, u, ctx, w, std::nullopt));
    const auto small_u = extract_feature(testutil::synth_natural(3, 4, 6), w);
    CHECK_THROWS(nll_bits(r, small_u, ctx, w, std::nullopt));
  }
}

TEST_CASE("per-term locality of the autoregressive factorization") {
  const ModelWeights w = init_model_weights(12);
  const Image xt = testutil::synth_natural(6, 5, 7);
  const ResidualPlane r = random_residuals(5, 6, 44);
  const auto u = extract_feature(xt, w);
  const auto ctx = extract_context(r, w);
  const std::vector<double> base = testutil::oracle_nll_terms(r, r, u, ctx, w, std::nullopt);

  SUBCASE("perturbing a pixel leaves all raster-earlier terms unchanged") {
    const uint32_t py = 2, px = 3;
    ResidualPlane pert = r;
    pert.set(py, px, 0, r.at(py, px, 0) == 30 ? -30 : 30);
    const auto ctx2 = extract_context(pert, w);
    const std::vector<double> terms = testutil::oracle_nll_terms(pert, pert, u, ctx2, w, std::nullopt);
    const double impl_diff = nll_bits(pert, u, ctx2, w, std::nullopt) -
                             nll_bits(r, u, ctx, w, std::nullopt);
    double term_diff = 0.0;
    for (uint32_t y = 0; y < r.h; ++y) {
      for (uint32_t x = 0; x < r.w; ++x) {
        for (int c = 0; c < 3; ++c) {
          const size_t i = (static_cast<size_t>(y) * r.w + x) * 3 + c;
          if (y < py || (y == py && x < px)) {
            CHECK(terms[i] == base[i]);  // strictly earlier pixels untouched
          }
          term_diff += terms[i] - base[i];
        }
      }
    }
    CHECK(impl_diff == doctest::Approx(term_diff).epsilon(1e-9));
  }
  SUBCASE("channel-1 term ignores later channels of the same pixel") {
    const uint32_t py = 3, px = 1;
    ResidualPlane pert = r;
    pert.set(py, px, 1, r.at(py, px, 1) + 5);
    pert.set(py, px, 2, r.at(py, px, 2) - 5);
    const auto ctx2 = extract_context(pert, w);
    const std::vector<double> terms =
        testutil::oracle_nll_terms(pert, pert, u, ctx2, w, std::nullopt);
    const size_t i0 = (static_cast<size_t>(py) * r.w + px) * 3;
    CHECK(terms[i0] == base[i0]);
  }
}

TEST_CASE("bias correction loss definition") {
  const ModelWeights w0 = init_model_weights(13);

  SUBCASE("identity-conditioned copy with already-quantized residuals is free") {
    const ModelWeights w = with_cond_copied_from_plain(w0);
    const Image xt = testutil::synth_natural(5, 5, 8);
    for (int tau : {1, 2, 4}) {
      // Residuals that survive quantization untouched: multiples of the
      // bin size.  Context and chain then match on both sides.
      std::mt19937_64 rng(500 + tau);
      std::uniform_int_distribution<int> uni(-8, 8);
      ResidualPlane r(5, 5);
      for (auto& v : r.v) v = static_cast<int16_t>(uni(rng) * (2 * tau + 1));
      const auto u = extract_feature(xt, w);
      CHECK(nlrc::bias_correction_loss(r, nlrc::quantize_residual_plane(r, tau), u, w, tau) ==
            doctest::Approx(0.0).epsilon(1e-12));
    }
  }
  SUBCASE("matches the two-term oracle on a random instance") {
    const Image xt = testutil::synth_natural(5, 4, 9);
    const ResidualPlane r = random_residuals(4, 5, 45);
    const auto u = extract_feature(xt, w0);
    for (int tau = 1; tau <= 5; ++tau) {
      const ResidualPlane rq = nlrc::quantize_residual_plane(r, tau);
      const double got = nlrc::bias_correction_loss(r, rq, u, w0, tau);
      const double want =
          oracle_nll_sum(r, rq, u, extract_context(rq, w0), w0, tau) -
          oracle_nll_sum(r, r, u, extract_context(r, w0), w0, std::nullopt);
      CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
  }
  SUBCASE("tau zero is rejected") {
    const Image xt = testutil::synth_natural(4, 4, 10);
    const ResidualPlane r = random_residuals(4, 4, 46);
    const auto u = extract_feature(xt, w0);
    CHECK_THROWS(nlrc::bias_correction_loss(r, r, u, w0, 0));
  }
}

TEST_CASE("backward reproduces finite differences on every tensor family") {
  const ModelWeights w = init_model_weights(14);
  const Image xt = testutil::synth_natural(4, 4, 11);
  const ResidualPlane r = random_residuals(4, 4, 47, 20);
  const int tau = 2;
  const ResidualPlane rq = nlrc::quantize_residual_plane(r, tau);

  // Entries probed per tensor; ctx entries are causal taps only
  // (structural zeros are asserted separately).
  const std::vector<std::pair<std::string, size_t>> plain_entries = {
      {"feat.conv1.w", 5415 % (64 * 3 * 3 * 3)},
      {"feat.conv1.b", 17},
      {"feat.conv2.w", 200007 % (64 * 64 * 3 * 3)},
      {"feat.conv2.b", 60},
      {"ctx.conv.w", (static_cast<size_t>(9) * 3 + 1) * 25 + 0 * 5 + 3},  // oc 9, ic 1, ky 0, kx 3
      {"ctx.conv.b", 31},
      {"plain.fc1.w", 777},
      {"plain.fc1.b", 100},
      {"plain.fc2.w", 9000},
      {"plain.fc2.b", 5},
      {"plain.pi.w", 800},
      {"plain.pi.b", 7},
      {"plain.mu.w", 351},
      {"plain.mu.b", 14},
      {"plain.sg.w", 1000},
      {"plain.sg.b", 0},
      {"plain.bt.w", 150},
      {"plain.bt.b", 2},
  };
  const std::vector<std::pair<std::string, size_t>> cond_entries = {
      {"cond.fc1.w", 456},
      {"cond.fc1.b", 77},
      {"cond.fc2.w", 11111},
      {"cond.fc2.b", 90},
      {"cond.pi.w", 1200},
      {"cond.pi.b", 11},
      {"cond.mu.w", 640},
      {"cond.mu.b", 3},
      {"cond.sg.w", 420},
      {"cond.sg.b", 10},
      {"cond.bt.w", 300},
      {"cond.bt.b", 1},
      // Modulation rows for the active bound only.
      {"cond.fc1.s", static_cast<size_t>(tau - 1) * 128 + 9},
      {"cond.fc1.t", static_cast<size_t>(tau - 1) * 128 + 40},
      {"cond.fc2.s", static_cast<size_t>(tau - 1) * 128 + 100},
      {"cond.pi.t", static_cast<size_t>(tau - 1) * 15 + 6},
      {"cond.mu.s", static_cast<size_t>(tau - 1) * 15 + 12},
      {"cond.sg.t", static_cast<size_t>(tau - 1) * 15 + 2},
      {"cond.bt.s", static_cast<size_t>(tau - 1) * 3 + 1},
  };

  SUBCASE("plain loss") {
    const auto loss = [&](const ModelWeights& ww) {
      return nll_bits(r, extract_feature(xt, ww), extract_context(r, ww), ww, std::nullopt);
    };
    const BackwardResult res = backward(LossKind::kPlainNll, xt, r, r, std::nullopt, w);
    CHECK(res.loss_bits == doctest::Approx(loss(w)).epsilon(1e-12));
    for (const auto& [name, idx] : plain_entries) {
      CAPTURE(name);
      CAPTURE(idx);
      const double fd = fd_entry(loss, w, name, idx);
      const double an = res.grads.t(name)[idx];
      CHECK(rel_err(fd, an) < 1e-4);
    }
  }
  SUBCASE("conditioned loss") {
    const auto loss = [&](const ModelWeights& ww) {
      return nll_bits(r, rq, extract_feature(xt, ww), extract_context(rq, ww), ww, tau);
    };
    const BackwardResult res = backward(LossKind::kCondNll, xt, r, rq, tau, w);
    CHECK(res.loss_bits == doctest::Approx(loss(w)).epsilon(1e-12));
    std::vector<std::pair<std::string, size_t>> entries = cond_entries;
    entries.emplace_back("feat.conv1.w", 99);
    entries.emplace_back("ctx.conv.b", 8);
    for (const auto& [name, idx] : entries) {
      CAPTURE(name);
      CAPTURE(idx);
      CHECK(rel_err(fd_entry(loss, w, name, idx), res.grads.t(name)[idx]) < 1e-4);
    }
  }
  SUBCASE("bias correction loss reaches only the conditional estimator") {
    const auto loss = [&](const ModelWeights& ww) {
      return nlrc::bias_correction_loss(r, rq, extract_feature(xt, ww), ww, tau);
    };
    const BackwardResult res = backward(LossKind::kBiasCorrection, xt, r, rq, tau, w);
    CHECK(res.loss_bits == doctest::Approx(loss(w)).epsilon(1e-12));
    for (const auto& [name, idx] : cond_entries) {
      CAPTURE(name);
      CAPTURE(idx);
      CHECK(rel_err(fd_entry(loss, w, name, idx), res.grads.t(name)[idx]) < 1e-4);
    }
    // Stop-gradient contract: shared and plain tensors stay exactly zero.
    for (const char* name : {"feat.conv1.w", "feat.conv2.w", "feat.conv1.b", "feat.conv2.b",
                             "ctx.conv.w", "ctx.conv.b", "plain.fc1.w", "plain.fc2.w",
                             "plain.pi.w", "plain.mu.w", "plain.sg.w", "plain.bt.w",
                             "plain.fc1.b", "plain.pi.b"}) {
      const nlrc::Tensor& g = res.grads.t(name);
      double mx = 0.0;
      for (size_t i = 0; i < g.size(); ++i) mx = std::max(mx, std::fabs(g[i]));
      CAPTURE(name);
      CHECK(mx == 0.0);
    }
    // And something on the conditional side must actually move.
    double cond_mx = 0.0;
    const nlrc::Tensor& g = res.grads.t("cond.mu.w");
    for (size_t i = 0; i < g.size(); ++i) cond_mx = std::max(cond_mx, std::fabs(g[i]));
    CHECK(cond_mx > 0.0);
  }
}

TEST_CASE("gradients of non-causal context taps are structural zeros") {
  const ModelWeights w = init_model_weights(15);
  const Image xt = testutil::synth_natural(5, 5, 12);
  const ResidualPlane r = random_residuals(5, 5, 48);
  const BackwardResult res = backward(LossKind::kPlainNll, xt, r, r, std::nullopt, w);
  const nlrc::Tensor& g = res.grads.t("ctx.conv.w");
  size_t causal_nonzero = 0;
  for (uint32_t oc = 0; oc < 64; ++oc) {
    for (int ic = 0; ic < 3; ++ic) {
      for (int ky = 0; ky < 5; ++ky) {
        for (int kx = 0; kx < 5; ++kx) {
          const double v = g.at(oc, ic, ky, kx);
          if (!nlrc::context_tap_causal(ky, kx)) {
            CHECK(v == 0.0);
          } else {
            causal_nonzero += v != 0.0;
          }
        }
      }
    }
  }
  CHECK(causal_nonzero > 0);
}

TEST_CASE("a saturated certain model has zero loss and zero gradients") {
  // All weights zero except a huge mean bias: every channel's mass sits
  // entirely on +255 through the absorbing upper edge, so each coded
  // symbol is certain and the loss surface is exactly flat.
  ModelWeights w = nlrc::zero_like_model();
  w.t("plain.mu.b").fill(1055.0);
  ResidualPlane r(3, 3);
  for (auto& v : r.v) v = 255;
  const Image xt = nlrc::make_image(3, 3, 190);
  const BackwardResult res = backward(LossKind::kPlainNll, xt, r, r, std::nullopt, w);
  CHECK(std::fabs(res.loss_bits) <= 1e-9);
  for (const auto& [name, g] : res.grads.tensors()) {
    double mx = 0.0;
    for (size_t i = 0; i < g.size(); ++i) mx = std::max(mx, std::fabs(g[i]));
    CAPTURE(name);
    CHECK(mx <= 1e-12);
  }
}

TEST_CASE("fused training backward equals the two losses run separately") {
  const ModelWeights w = init_model_weights(16);
  const Image xt = testutil::synth_natural(6, 4, 13);
  const auto [payload, lossy] = nlrc::encode_lossy(xt, {});
  const ResidualPlane r = nlrc::compute_residual(xt, lossy);
  const int tau = 3;
  const ResidualPlane rq = nlrc::quantize_residual_plane(r, tau);

  const nlrc::TrainStepGradients fused = nlrc::train_losses_backward(xt, r, tau, w);
  const BackwardResult main = backward(LossKind::kPlainNll, xt, r, r, std::nullopt, w);
  const BackwardResult bias = backward(LossKind::kBiasCorrection, xt, r, rq, tau, w);

  CHECK(fused.main_bits == doctest::Approx(main.loss_bits).epsilon(1e-12));
  CHECK(fused.bias_bits == doctest::Approx(bias.loss_bits).epsilon(1e-12));
  for (const auto& [name, g] : fused.grads.tensors()) {
    const nlrc::Tensor& gm = main.grads.t(name);
    const nlrc::Tensor& gb = bias.grads.t(name);
    for (size_t i = 0; i < g.size(); ++i) {
      CHECK(std::fabs(g[i] - (gm[i] + gb[i])) <= 1e-12);
    }
  }
}
