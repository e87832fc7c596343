// Copyright 2026 The AnchorLM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference vs OpenMP kernels, same inputs.
#include <benchmark/benchmark.h>

#include <vector>

#include "anchorlm/kernels.hpp"
#include "anchorlm/mask.hpp"
#include "anchorlm/util.hpp"

namespace {

using namespace anchorlm;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <bool kParallel>
void BM_MatmulNT(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 256, out_dim = 256;
  const auto x = random_vector(rows * in, 1);
  const auto w = random_vector(out_dim * in, 2);
  std::vector<double> out(rows * out_dim);
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::matmul_nt(out, x, w, rows, in, out_dim);
    } else {
      kernels::serial::matmul_nt(out, x, w, rows, in, out_dim);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * rows * in * out_dim);
}

template <bool kParallel>
void BM_MaskedAttention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 128, heads = 4;
  const auto q = random_vector(t * d, 3);
  const auto k = random_vector(t * d, 4);
  const auto v = random_vector(t * d, 5);
  const MaskMatrix mask = causal_mask(t);
  std::vector<double> out(t * d);
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::masked_attention(out, {}, q, k, v, mask, heads, d);
    } else {
      kernels::serial::masked_attention(out, {}, q, k, v, mask, heads, d);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_MatmulNT<false>)->Arg(64)->Arg(512);
BENCHMARK(BM_MatmulNT<true>)->Arg(64)->Arg(512);
BENCHMARK(BM_MaskedAttention<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_MaskedAttention<true>)->Arg(128)->Arg(512);

BENCHMARK_MAIN();
