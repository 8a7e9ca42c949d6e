// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

// Entropy model kernels: feature and context extraction, parameter
// estimation, discrete mixture evaluation, and the training backward
// pass.

#include <benchmark/benchmark.h>

#include <optional>
#include <random>

#include "bench_util.hpp"
#include "nlrc/lossy.hpp"
#include "nlrc/model.hpp"
#include "nlrc/weights.hpp"

namespace {

nlrc::ResidualPlane random_residuals(uint32_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  nlrc::ResidualPlane r(n, n);
  for (int16_t& v : r.v) v = static_cast<int16_t>(static_cast<int>(rng() % 41) - 20);
  return r;
}

void BM_ExtractFeature(benchmark::State& state) {
  const uint32_t n = static_cast<uint32_t>(state.range(0));
  const nlrc::Image xt = benchutil::textured(n, n, 3);
  const nlrc::ModelWeights w = nlrc::init_model_weights(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nlrc::extract_feature(xt, w));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_ExtractFeature)->Arg(32)->Arg(64);

void BM_ExtractContext(benchmark::State& state) {
  const uint32_t n = static_cast<uint32_t>(state.range(0));
  const nlrc::ResidualPlane r = random_residuals(n, 5);
  const nlrc::ModelWeights w = nlrc::init_model_weights(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nlrc::extract_context(r, w));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_ExtractContext)->Arg(32)->Arg(64);

void BM_EstimateParams(benchmark::State& state) {
  const uint32_t n = static_cast<uint32_t>(state.range(0));
  const nlrc::Image xt = benchutil::textured(n, n, 3);
  const nlrc::ModelWeights w = nlrc::init_model_weights(1);
  const nlrc::FeatureMap u = nlrc::extract_feature(xt, w);
  const nlrc::ContextMap ctx = nlrc::extract_context(random_residuals(n, 5), w);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nlrc::estimate_params(u, ctx, w, std::nullopt));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_EstimateParams)->Arg(32);

void BM_DiscretePmf(benchmark::State& state) {
  const double mu[] = {-3.0, 0.5, 2.0, 11.0, -6.0};
  const double sg[] = {0.8, 2.0, 5.0, 1.2, 3.0};
  const double pi[] = {0.3, 0.3, 0.2, 0.1, 0.1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(nlrc::discrete_pmf(mu, sg, pi));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DiscretePmf);

void BM_QuantizedBinPmf(benchmark::State& state) {
  const double mu[] = {-3.0, 0.5, 2.0, 11.0, -6.0};
  const double sg[] = {0.8, 2.0, 5.0, 1.2, 3.0};
  const double pi[] = {0.3, 0.3, 0.2, 0.1, 0.1};
  const int tau = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(nlrc::quantized_bin_pmf(mu, sg, pi, tau));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_QuantizedBinPmf)->Arg(1)->Arg(5);

void BM_TrainBackward(benchmark::State& state) {
  const uint32_t n = static_cast<uint32_t>(state.range(0));
  const nlrc::Image x = benchutil::textured(n, n, 3);
  const auto [payload, xt] = nlrc::encode_lossy(x, nlrc::BlockTransformConfig{});
  benchmark::DoNotOptimize(payload);
  const nlrc::ResidualPlane r = nlrc::compute_residual(x, xt);
  const nlrc::ModelWeights w = nlrc::init_model_weights(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nlrc::train_losses_backward(xt, r, 2, w));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_TrainBackward)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
