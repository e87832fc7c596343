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

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "anchorlm/cache.hpp"
#include "anchorlm/corpus.hpp"
#include "anchorlm/model.hpp"
#include "anchorlm/util.hpp"

namespace anchorlm {

struct Sampling {
  enum class Kind { kGreedy, kTemperature };
  Kind kind = Kind::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  static Sampling greedy() { return {}; }
  static Sampling with_temperature(double t, std::uint64_t seed);
};

struct GenerationConfig {
  std::size_t max_new_tokens = 16;
  Sampling sampling;
  TokenId eos_id = 2;
  // A generated token with this id closes its sequence (the endpoint id for
  // EP models, <AC> otherwise).
  TokenId anchor_id = -1;
  bool reduction_enabled = true;
  // With false every cached entry stays visible (plain causal decoding).
  bool anchor_masks = true;
  std::int64_t protected_upto = 0;
  // Keep every step's logits in the result.
  bool record_logits = false;

  void validate() const;
};

struct GenerationResult {
  std::vector<TokenId> ids;
  std::vector<std::size_t> live_sizes;  // after each generated token
  CacheStats stats;
  double prefix_ms = 0.0;
  double decode_ms = 0.0;
  std::vector<std::vector<double>> logits;  // when record_logits
};

TokenId sample_token(std::span<const double> logits, const Sampling& sampling,
                     Rng& rng);

// Anchor-based autoregressive generation: one forward over the prefix under
// anchor masks, a reduction, then token-by-token decoding that reduces the
// cache each time a generated anchor has been cached.
GenerationResult generate(const ModelWeights& weights,
                          const SegmentedText& prefix,
                          const GenerationConfig& cfg);

// Log-likelihood of the last `n_scored` tokens of `text`. `text` continues
// the contents of `cache` (when given): its positions start at
// `start_position` and its sequence indices are already aligned with the
// cache. The cache is not modified.
double score_suffix(const ModelWeights& weights, const AnchorKVCache* cache,
                    std::int64_t start_position, const SegmentedText& text,
                    std::size_t n_scored, bool use_ansan);

// Sum of log-probabilities of `continuation` following `context`.
// Continuation tokens extend the context's current sequence as non-anchors.
double score_continuation(const ModelWeights& weights,
                          const SegmentedText& context,
                          std::span<const TokenId> continuation, bool use_ansan);

// Index of the best score; ties go to the lowest index.
std::size_t argmax_choice(std::span<const double> scores);

}  // namespace anchorlm
