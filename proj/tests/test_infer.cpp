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

#include <doctest.h>

#include <cmath>
#include <map>

#include "anchorlm/error.hpp"
#include "anchorlm/infer.hpp"
#include "support.hpp"

using namespace anchorlm;

namespace {

// Every token embeds to the same direction and only `favored` has a nonzero
// head row, so the model predicts `favored` everywhere.
ModelWeights rigged_model(std::size_t vocab, TokenId favored) {
  const auto c = support::small_config(vocab);
  ModelWeights w = init_weights(c, 1);
  std::fill(w.params.begin(), w.params.end(), 0.0);
  const std::size_t d = c.d_model;
  for (std::size_t r = 0; r < vocab; ++r) w.params[w.layout.tok_emb + r * d] = 1.0;
  for (std::size_t k = 0; k < d; ++k) w.params[w.layout.final_norm + k] = 1.0;
  for (const auto& l : w.layout.layers) {
    for (std::size_t k = 0; k < d; ++k) {
      w.params[l.attn_norm + k] = 1.0;
      w.params[l.ffn_norm + k] = 1.0;
    }
  }
  w.params[w.layout.head + static_cast<std::size_t>(favored) * d] = 10.0;
  return w;
}

// The token greedy decoding emits most often, used as the anchor id so that
// reductions actually happen during decoding.
TokenId frequent_token(const ModelWeights& w, const SegmentedText& prefix) {
  GenerationConfig g;
  g.max_new_tokens = 16;
  g.eos_id = -1;
  g.reduction_enabled = false;
  const auto r = generate(w, prefix, g);
  std::map<TokenId, int> count;
  for (TokenId id : r.ids) ++count[id];
  TokenId best = r.ids.front();
  for (const auto& [id, n] : count)
    if (n > count[best]) best = id;
  return best;
}

}  // namespace

TEST_SUITE("infer") {

TEST_CASE("reduction leaves greedy generation unchanged") {
  Rng rng(51);
  std::size_t reductions_seen = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = support::random_tiny_config(rng);
    const auto w = support::spread_weights(c, 200 + trial, 1.0);
    const auto prefix = support::random_segmented(rng, 2 + rng.below(20), c.vocab_size, 0.3);
    GenerationConfig g;
    g.max_new_tokens = 16;
    g.eos_id = -1;
    g.anchor_id = frequent_token(w, prefix);
    g.record_logits = true;
    const auto on = generate(w, prefix, g);
    g.reduction_enabled = false;
    const auto off = generate(w, prefix, g);
    CHECK(on.ids == off.ids);
    REQUIRE(on.logits.size() == off.logits.size());
    for (std::size_t i = 0; i < on.logits.size(); ++i)
      CHECK(support::max_rel_diff(on.logits[i], off.logits[i]) < 1e-5);
    reductions_seen += on.stats.total_discards;
  }
  CHECK(reductions_seen > 0);
}

TEST_CASE("without anchors the cache grows by one per step") {
  const auto c = support::small_config(9);
  const auto w = support::spread_weights(c, 3);
  SegmentedText prefix;
  for (TokenId id : {5, 6, 7}) prefix.push_back(id, false, 0);
  GenerationConfig g;
  g.max_new_tokens = 8;
  g.eos_id = -1;
  const auto r = generate(w, prefix, g);
  REQUIRE(r.ids.size() == 8);
  for (std::size_t i = 0; i < r.live_sizes.size(); ++i) CHECK(r.live_sizes[i] == 3 + i);
  CHECK(r.stats.total_discards == 0);
}

TEST_CASE("max_new_tokens 1 yields exactly one token") {
  const auto w = rigged_model(6, 2);  // always predicts eos
  SegmentedText prefix;
  prefix.push_back(4, false, 0);
  GenerationConfig g;
  g.max_new_tokens = 1;
  CHECK(generate(w, prefix, g).ids.size() == 1);
  g.max_new_tokens = 5;
  CHECK(generate(w, prefix, g).ids == std::vector<TokenId>{2});
}

TEST_CASE("prompt over the context is a contract error") {
  auto c = support::small_config(6);
  c.context_len = 4;
  const auto w = init_weights(c, 1);
  Rng rng(52);
  const auto prefix = support::random_segmented(rng, 5, 6);
  CHECK_THROWS_AS(generate(w, prefix, GenerationConfig{}), ContractError);
}

TEST_CASE("temperature sampling is seeded") {
  const auto c = support::small_config(9);
  const auto w = support::spread_weights(c, 8);
  SegmentedText prefix;
  prefix.push_back(5, false, 0);
  GenerationConfig g;
  g.max_new_tokens = 10;
  g.eos_id = -1;
  g.sampling = Sampling::with_temperature(1.5, 77);
  CHECK(generate(w, prefix, g).ids == generate(w, prefix, g).ids);
  CHECK_THROWS_AS(Sampling::with_temperature(0.0, 1), ConfigError);
}

TEST_CASE("continuation scores") {
  const auto c = support::small_config(7);
  auto w = init_weights(c, 2);
  const auto& head = w.layout.tensors.back();
  std::fill_n(w.params.begin() + static_cast<std::ptrdiff_t>(head.offset), head.size(), 0.0);
  SegmentedText ctx;
  ctx.push_back(5, false, 0);
  ctx.push_back(4, true, 0);
  CHECK(score_continuation(w, ctx, {}, true) == 0.0);
  const std::vector<TokenId> three = {5, 6, 5};
  CHECK(score_continuation(w, ctx, three, true) == doctest::Approx(-3 * std::log(7.0)));
}

TEST_CASE("rigged model picks its favored choice") {
  const auto w = rigged_model(8, 7);
  SegmentedText ctx;
  ctx.push_back(4, false, 0);
  std::vector<double> scores;
  for (TokenId choice : {5, 6, 7}) {
    const TokenId one[1] = {choice};
    scores.push_back(score_continuation(w, ctx, one, true));
  }
  CHECK(argmax_choice(scores) == 2);
  CHECK(argmax_choice(std::vector<double>{1.0, 3.0, 3.0}) == 1);
}

TEST_CASE("scoring against a reduced cache equals scoring the full text") {
  Rng rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = support::random_tiny_config(rng);
    const auto w = support::spread_weights(c, 300 + trial);
    const auto demo = support::random_segmented(rng, 3 + rng.below(15), c.vocab_size, 0.3);
    SegmentedText full = demo;
    const std::int32_t seq = full.next_seq_index();
    SegmentedText tail;
    for (int i = 0; i < 4; ++i) {
      const auto id = static_cast<TokenId>(rng.below(c.vocab_size));
      full.push_back(id, false, seq);
      tail.push_back(id, false, seq);
    }
    const auto out = forward(w, demo.ids, support::iota64(demo.size()), anchor_mask(demo));
    AnchorKVCache cache(c.n_layers, c.d_model);
    cache.append_block(support::iota64(demo.size()), token_flags(demo), out.new_kv);
    cache.reduce();
    const double cached = score_suffix(w, &cache, static_cast<std::int64_t>(demo.size()),
                                       tail, 3, true);
    const double direct = score_suffix(w, nullptr, 0, full, 3, true);
    CHECK(cached == doctest::Approx(direct).epsilon(1e-9));
  }
}

}  // TEST_SUITE
