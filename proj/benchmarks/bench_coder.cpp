// Copyright (c) the nlrc authors. All rights reserved.
//
// Use of this source code is governed by the Apache-2.0 license
// that can be found in the LICENSE file.

// Range coder throughput: frequency table construction, encoding, and
// decoding over a skewed alphabet comparable to residual statistics.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "nlrc/coder.hpp"

namespace {

std::vector<double> zipf_pmf(size_t n) {
  std::vector<double> pmf(n);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) sum += (pmf[i] = 1.0 / static_cast<double>(i + 1));
  for (double& p : pmf) p /= sum;
  return pmf;
}

std::vector<uint32_t> draw_symbols(const std::vector<double>& pmf, size_t count) {
  std::mt19937_64 rng(1);
  std::discrete_distribution<size_t> draw(pmf.begin(), pmf.end());
  std::vector<uint32_t> syms(count);
  for (uint32_t& s : syms) s = static_cast<uint32_t>(draw(rng));
  return syms;
}

void BM_BuildFreqTable(benchmark::State& state) {
  const std::vector<double> pmf = zipf_pmf(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(nlrc::build_freq_table(pmf));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildFreqTable)->Arg(103)->Arg(511);

void BM_RangeEncode(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  const std::vector<double> pmf = zipf_pmf(257);
  const nlrc::FreqTable table = nlrc::build_freq_table(pmf);
  const std::vector<uint32_t> syms = draw_symbols(pmf, n);
  for (auto _ : state) {
    nlrc::ByteSink sink;
    nlrc::RangeEncoder enc(sink);
    for (uint32_t s : syms) enc.encode(table, s);
    enc.finish();
    benchmark::DoNotOptimize(sink.take());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RangeEncode)->Arg(100000);

void BM_RangeDecode(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  const std::vector<double> pmf = zipf_pmf(257);
  const nlrc::FreqTable table = nlrc::build_freq_table(pmf);
  const std::vector<uint32_t> syms = draw_symbols(pmf, n);
  nlrc::ByteSink sink;
  nlrc::RangeEncoder enc(sink);
  for (uint32_t s : syms) enc.encode(table, s);
  enc.finish();
  const std::vector<uint8_t> bytes = sink.take();
  for (auto _ : state) {
    nlrc::ByteSource src(bytes.data(), bytes.size());
    nlrc::RangeDecoder dec(src);
    uint64_t acc = 0;
    for (size_t i = 0; i < n; ++i) acc += dec.decode(table);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RangeDecode)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
