// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

// Whole-pipeline cost: base-layer coding, full encode at exact and
// relaxed bounds, and decode.

#include <benchmark/benchmark.h>

#include "bench_util.hpp"
#include "nlrc/lossy.hpp"
#include "nlrc/pipeline.hpp"
#include "nlrc/weights.hpp"

namespace {

void BM_LossyEncode(benchmark::State& state) {
  const uint32_t n = static_cast<uint32_t>(state.range(0));
  const nlrc::Image x = benchutil::textured(n, n, 7);
  const nlrc::BlockTransformConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nlrc::encode_lossy(x, cfg));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_LossyEncode)->Arg(64)->Arg(128);

void BM_Encode(benchmark::State& state) {
  const uint32_t n = static_cast<uint32_t>(state.range(0));
  const int tau = static_cast<int>(state.range(1));
  const nlrc::Image x = benchutil::textured(n, n, 7);
  const nlrc::ModelWeights w = nlrc::init_model_weights(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nlrc::encode(x, tau, w, tau > 0));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_Encode)->Args({32, 0})->Args({32, 3});

void BM_Decode(benchmark::State& state) {
  const uint32_t n = static_cast<uint32_t>(state.range(0));
  const int tau = static_cast<int>(state.range(1));
  const nlrc::Image x = benchutil::textured(n, n, 7);
  const nlrc::ModelWeights w = nlrc::init_model_weights(1);
  const nlrc::EncodeResult e = nlrc::encode(x, tau, w, tau > 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nlrc::decode(e.container, w));
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_Decode)->Args({32, 0})->Args({32, 3});

}  // namespace

BENCHMARK_MAIN();
