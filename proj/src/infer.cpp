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

#include "anchorlm/infer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "anchorlm/error.hpp"

namespace anchorlm {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

MaskMatrix all_visible(std::size_t rows, std::size_t cached) {
  MaskMatrix m(rows, cached + rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cached + i + 1; ++j) m.set(i, j, true);
  }
  return m;
}

}  // namespace

Sampling Sampling::with_temperature(double t, std::uint64_t seed) {
  if (!(t > 0.0)) throw ConfigError("sampling temperature must be > 0");
  return {Kind::kTemperature, t, seed};
}

void GenerationConfig::validate() const {
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  if (sampling.kind == Sampling::Kind::kTemperature &&
      !(sampling.temperature > 0.0)) {
    throw ConfigError("sampling temperature must be > 0");
  }
  if (protected_upto < 0) throw ConfigError("protected_upto must be >= 0");
}

TokenId sample_token(std::span<const double> logits, const Sampling& sampling,
                     Rng& rng) {
  if (sampling.kind == Sampling::Kind::kGreedy) {
    return static_cast<TokenId>(argmax_choice(logits));
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((logits[i] - m) / sampling.temperature);
    s += p[i];
  }
  double u = rng.uniform() * s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    u -= p[i];
    if (u < 0.0) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(p.size() - 1);
}

GenerationResult generate(const ModelWeights& weights,
                          const SegmentedText& prefix,
                          const GenerationConfig& cfg) {
  cfg.validate();
  validate(prefix);
  const ModelConfig& mc = weights.config;
  if (prefix.empty()) throw ContractError("generation prefix is empty");
  if (prefix.size() > mc.context_len) {
    throw ContractError("prompt of " + std::to_string(prefix.size()) +
                        " tokens exceeds the model context of " +
                        std::to_string(mc.context_len));
  }

  GenerationResult res;
  Rng rng(cfg.sampling.seed);
  AnchorKVCache cache(mc.n_layers, mc.d_model, cfg.protected_upto);

  const std::size_t l = prefix.size();
  const auto flags = token_flags(prefix);
  std::vector<std::int64_t> positions(l);
  for (std::size_t i = 0; i < l; ++i) positions[i] = static_cast<std::int64_t>(i);
  const MaskMatrix prefix_mask =
      cfg.anchor_masks ? anchor_mask(flags) : causal_mask(l);

  std::size_t anchors_seen = 0;
  std::size_t since_anchor = 0;
  auto track = [&](bool anchor) {
    if (anchor) {
      ++anchors_seen;
      since_anchor = 0;
    } else {
      ++since_anchor;
    }
  };
  for (const auto& f : flags) track(f.is_anchor);

  // Live entries never exceed anchors + open tail + protected entries.
  auto check_bound = [&] {
    if (!cfg.reduction_enabled) return;
    const auto live_positions = cache.positions();
    const auto protected_count = static_cast<std::size_t>(std::count_if(
        live_positions.begin(), live_positions.end(),
        [&](std::int64_t p) { return p < cfg.protected_upto; }));
    if (cache.size() > anchors_seen + since_anchor + protected_count) {
      throw InternalError("anchor cache exceeded its reduction bound");
    }
  };

  auto start = Clock::now();
  auto out = forward(weights, prefix.ids, positions, prefix_mask);
  res.prefix_ms = elapsed_ms(start);
  cache.append_block(positions, flags, out.new_kv);

  TokenId next = sample_token(out.row(l - 1), cfg.sampling, rng);
  if (cfg.record_logits) {
    const auto row = out.row(l - 1);
    res.logits.emplace_back(row.begin(), row.end());
  }
  res.ids.push_back(next);
  if (cfg.reduction_enabled) cache.reduce();
  check_bound();
  res.live_sizes.push_back(cache.size());

  std::int32_t seq = prefix.next_seq_index();
  auto pos = static_cast<std::int64_t>(l);
  start = Clock::now();
  while (res.ids.size() < cfg.max_new_tokens && next != cfg.eos_id) {
    const TokenFlags cur{next == cfg.anchor_id, seq};
    MaskMatrix mask;
    if (cfg.anchor_masks) {
      const MaskRow row = decode_mask_row(cur, live_flags(cache));
      mask = stack_rows(std::span<const MaskRow>(&row, 1));
    } else {
      mask = all_visible(1, cache.size());
    }
    const std::int64_t step_pos[1] = {pos};
    const TokenId step_id[1] = {next};
    out = forward(weights, step_id, step_pos, mask, cache.past());
    cache.append_block(step_pos, std::span<const TokenFlags>(&cur, 1),
                       out.new_kv);
    track(cur.is_anchor);
    if (cur.is_anchor) {
      ++seq;
      if (cfg.reduction_enabled) cache.reduce();
    }
    check_bound();

    next = sample_token(out.row(0), cfg.sampling, rng);
    if (cfg.record_logits) {
      res.logits.emplace_back(out.row(0).begin(), out.row(0).end());
    }
    res.ids.push_back(next);
    res.live_sizes.push_back(cache.size());
    ++pos;
  }
  res.decode_ms = elapsed_ms(start);
  res.stats = cache.stats();
  return res;
}

double score_suffix(const ModelWeights& weights, const AnchorKVCache* cache,
                    std::int64_t start_position, const SegmentedText& text,
                    std::size_t n_scored, bool use_ansan) {
  if (n_scored == 0) return 0.0;
  const std::size_t t = text.size();
  ANCHORLM_EXPECT(n_scored < t,
                  "every scored token needs a predecessor in the text");
  ANCHORLM_EXPECT(start_position >= 0, "start position must be >= 0");
  if (static_cast<std::size_t>(start_position) + t >
      weights.config.context_len) {
    throw ContractError("text of " + std::to_string(t) +
                        " tokens overflows the context window");
  }

  std::vector<std::int64_t> positions(t);
  for (std::size_t i = 0; i < t; ++i) {
    positions[i] = start_position + static_cast<std::int64_t>(i);
  }
  const auto fresh = token_flags(text);
  const auto live = cache ? live_flags(*cache) : std::vector<TokenFlags>{};
  const MaskMatrix mask = extend_mask(fresh, live, !use_ansan);
  const PastKV past = cache ? cache->past() : PastKV{};
  const auto out = forward(weights, text.ids, positions, mask, past);

  double total = 0.0;
  for (std::size_t i = t - n_scored; i < t; ++i) {
    total += log_prob(out.row(i - 1), text.ids[i]);
  }
  return total;
}

double score_continuation(const ModelWeights& weights,
                          const SegmentedText& context,
                          std::span<const TokenId> continuation,
                          bool use_ansan) {
  if (continuation.empty()) return 0.0;
  if (context.empty()) throw ContractError("continuation needs a context");
  SegmentedText combined = context;
  const std::int32_t seq = context.next_seq_index();
  for (TokenId id : continuation) combined.push_back(id, false, seq);
  if (combined.size() > weights.config.context_len) {
    throw ContractError("context plus continuation overflows the context window");
  }
  return score_suffix(weights, nullptr, 0, combined, continuation.size(),
                      use_ansan);
}

std::size_t argmax_choice(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

}  // namespace anchorlm
