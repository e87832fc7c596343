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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <string>
#include <vector>

#include "anchorlm/corpus.hpp"
#include "anchorlm/mask.hpp"
#include "anchorlm/model.hpp"
#include "anchorlm/util.hpp"
#include "oracles/oracles.hpp"

namespace support {

using namespace anchorlm;

// Random ids with anchors at random places; sequence numbers follow the
// anchors so that the result satisfies every SegmentedText invariant.
inline SegmentedText random_segmented(Rng& rng, std::size_t length,
                                      std::size_t vocab, double p_anchor = 0.25) {
  SegmentedText t;
  std::int32_t seq = 0;
  for (std::size_t i = 0; i < length; ++i) {
    const bool anchor = rng.bernoulli(p_anchor);
    t.push_back(static_cast<TokenId>(rng.below(vocab)), anchor, seq);
    if (anchor) ++seq;
  }
  return t;
}

inline ModelConfig random_tiny_config(Rng& rng) {
  ModelConfig c;
  c.vocab_size = 5 + rng.below(8);
  c.n_layers = 1 + rng.below(2);
  c.n_heads = 1 + rng.below(2);
  c.d_model = c.n_heads * 2 * (1 + rng.below(3));
  c.d_ff = 4 + rng.below(12);
  c.context_len = 128;
  return c;
}

inline ModelConfig small_config(std::size_t vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.context_len = 128;
  return c;
}

// Random weights with a larger spread than init_weights, so attention
// patterns are far from uniform and differences show up in the logits.
inline ModelWeights spread_weights(const ModelConfig& c, std::uint64_t seed,
                                   double scale = 0.5) {
  ModelWeights w = init_weights(c, seed);
  Rng rng(mix_seed(seed, 17));
  for (auto& p : w.params) p += scale * rng.normal();
  return w;
}

inline oracles::TinyDims dims_of(const ModelConfig& c) {
  oracles::TinyDims d;
  d.vocab = static_cast<int>(c.vocab_size);
  d.layers = static_cast<int>(c.n_layers);
  d.heads = static_cast<int>(c.n_heads);
  d.d = static_cast<int>(c.d_model);
  d.dff = static_cast<int>(c.d_ff);
  d.rope_base = c.rope_base;
  d.eps = c.norm_eps;
  return d;
}

inline oracles::BitMatrix bits_of(const MaskMatrix& m) {
  oracles::BitMatrix b(m.rows(), std::vector<int>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) b[i][j] = m(i, j) ? 1 : 0;
  return b;
}

inline std::vector<int> anchor_ints(const SegmentedText& t) {
  return {t.is_anchor.begin(), t.is_anchor.end()};
}

inline std::vector<std::int64_t> iota64(std::size_t n, std::int64_t start = 0) {
  std::vector<std::int64_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = start + static_cast<std::int64_t>(i);
  return p;
}

// Largest elementwise |a - b| / max(|a|, |b|), with a floor on the scale.
inline double max_rel_diff(const std::vector<double>& a,
                           const std::vector<double>& b, double floor = 1e-8) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("anchorlm-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace support
