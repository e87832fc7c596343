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
#include <fstream>

#include "anchorlm/corpus.hpp"
#include "anchorlm/error.hpp"
#include "support.hpp"

using namespace anchorlm;

namespace {

Vocab vocab_for(const std::string& text, const AnchorPolicy& policy) {
  const std::vector<std::string> docs = {text};
  return build_vocab_from_documents(docs, policy, 1000);
}

std::vector<std::string> words(const Vocab& v, const SegmentedText& t) {
  std::vector<std::string> out;
  for (TokenId id : t.ids) out.push_back(v.token(id));
  return out;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("vocab orders by frequency then lexicographically") {
  const auto v = vocab_for("a a b", AnchorPolicy::endpoint());
  CHECK(v.size() == 6);
  CHECK(v.id("a") < v.id("b"));
  CHECK(v.id("zzz") == v.unk_id());
  const auto v2 = vocab_for("b a", AnchorPolicy::endpoint());
  CHECK(v2.id("a") < v2.id("b"));
}

TEST_CASE("vocab ids and tokens are inverse; specials are distinct") {
  const auto v = vocab_for("the cat sat on the mat . it sat .", AnchorPolicy::anchor_token());
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(v.id(v.token(static_cast<TokenId>(i))) == static_cast<TokenId>(i));
  }
  REQUIRE(v.anchor_id());
  CHECK(*v.anchor_id() == 4);
  CHECK(v.num_specials() == 5);
  for (std::size_t i = v.num_specials(); i < v.size(); ++i) {
    CHECK(v.token(static_cast<TokenId>(i)).find("<AC>") == std::string::npos);
  }
}

TEST_CASE("AC vocab holds an anchor id distinct from corpus ids") {
  const auto v = vocab_for("x", AnchorPolicy::anchor_token());
  REQUIRE(v.anchor_id());
  CHECK(*v.anchor_id() != v.id("x"));
}

TEST_CASE("max size caps corpus tokens") {
  const std::vector<std::string> docs = {"a a a b b c d"};
  const auto v = build_vocab_from_documents(docs, AnchorPolicy::endpoint(), 6);
  CHECK(v.size() == 6);
  CHECK(v.find("a"));
  CHECK(v.find("b"));
  CHECK_FALSE(v.find("c"));
}

TEST_CASE("empty corpus is an error") {
  const auto dir = support::scratch_dir("empty");
  std::ofstream(dir / "empty.txt").close();
  const std::vector<std::filesystem::path> paths = {dir / "empty.txt"};
  CHECK_THROWS_AS(build_vocab(paths, AnchorPolicy::anchor_token(), 100),
                  EmptyCorpusError);
}

TEST_CASE("vocab file round trip") {
  const auto v = vocab_for("hello world . hello", AnchorPolicy::anchor_token());
  const auto dir = support::scratch_dir("vocab");
  v.save(dir / "v.txt");
  CHECK(Vocab::load(dir / "v.txt") == v);
}

TEST_CASE("sentence splitting") {
  using V = std::vector<std::string>;
  CHECK(split_sentences("He runs. She waits.") == V{"He runs.", "She waits."});
  CHECK(split_sentences("no terminator") == V{"no terminator"});
  CHECK(split_sentences("Hi! Ok? End.") == V{"Hi!", "Ok?", "End."});
  CHECK(split_sentences("") == V{});
  CHECK(split_sentences("3.14 is pi.") == V{"3.14 is pi."});
}

TEST_CASE("EP annotation") {
  const std::string text = "He runs. She waits.";
  const auto v = vocab_for(text, AnchorPolicy::endpoint());
  const auto t = annotate(text, v, AnchorPolicy::endpoint());
  CHECK(words(v, t) == std::vector<std::string>{"He", "runs", ".", "She", "waits", "."});
  CHECK(t.is_anchor == std::vector<std::uint8_t>{0, 0, 1, 0, 0, 1});
  CHECK(t.seq_index == std::vector<std::int32_t>{0, 0, 0, 1, 1, 1});
}

TEST_CASE("EP leaves ! and ? sentences without anchors") {
  const std::string text = "Hi! Ok. Go";
  const auto v = vocab_for(text, AnchorPolicy::endpoint());
  const auto t = annotate(text, v, AnchorPolicy::endpoint());
  CHECK(t.is_anchor == std::vector<std::uint8_t>{0, 0, 0, 1, 0});
  CHECK(t.seq_index == std::vector<std::int32_t>{0, 0, 0, 0, 1});
}

TEST_CASE("EP without an endpoint in the vocab is a config error") {
  const auto v = vocab_for("a b", AnchorPolicy::endpoint());
  CHECK_THROWS_AS(annotate("a b", v, AnchorPolicy::endpoint()), ConfigError);
}

TEST_CASE("AC annotation") {
  const auto v = vocab_for("Hi.", AnchorPolicy::anchor_token());
  const auto t = annotate("Hi.", v, AnchorPolicy::anchor_token());
  CHECK(words(v, t) == std::vector<std::string>{"Hi", ".", "<AC>"});
  CHECK(t.is_anchor == std::vector<std::uint8_t>{0, 0, 1});
  CHECK(t.seq_index == std::vector<std::int32_t>{0, 0, 0});
}

TEST_CASE("AC policy with a vocab lacking <AC> is a config error") {
  const auto v = vocab_for("Hi.", AnchorPolicy::endpoint());
  CHECK_THROWS_AS(annotate("Hi.", v, AnchorPolicy::anchor_token()), ConfigError);
}

TEST_CASE("every-N annotation") {
  const std::string text = "t1 t2 t3 t4 t5";
  const auto policy = AnchorPolicy::every_n(2);
  const auto v = vocab_for(text, policy);
  const auto t = annotate(text, v, policy);
  CHECK(words(v, t) ==
        std::vector<std::string>{"t1", "t2", "<AC>", "t3", "t4", "<AC>", "t5"});
  CHECK(t.is_anchor == std::vector<std::uint8_t>{0, 0, 1, 0, 0, 1, 0});
  CHECK(t.seq_index == std::vector<std::int32_t>{0, 0, 0, 1, 1, 1, 2});
}

TEST_CASE("policy parameters are validated") {
  CHECK_THROWS_AS(AnchorPolicy::every_n(0), ConfigError);
  CHECK_THROWS_AS(AnchorPolicy::random(0.0, 1), ConfigError);
  CHECK_THROWS_AS(AnchorPolicy::random(1.0, 1), ConfigError);
  CHECK(AnchorPolicy::parse("every:10") == AnchorPolicy::every_n(10));
  CHECK(AnchorPolicy::parse("random:0.1:7") == AnchorPolicy::random(0.1, 7));
  CHECK(AnchorPolicy::parse(AnchorPolicy::random(0.25, 3).to_string()) ==
        AnchorPolicy::random(0.25, 3));
  CHECK_THROWS(AnchorPolicy::parse("sometimes"));
}

TEST_CASE("random policy rate is within three standard errors") {
  std::string text;
  for (int i = 0; i < 100000; ++i) text += "w ";
  const auto policy = AnchorPolicy::random(0.1, 42);
  const auto v = vocab_for("w", policy);
  const auto t = annotate(text, v, policy);
  std::size_t anchors = 0;
  for (auto a : t.is_anchor) anchors += a;
  const double n = 100000.0;
  const double rate = static_cast<double>(anchors) / n;
  const double se = std::sqrt(0.1 * 0.9 / n);
  CHECK(std::abs(rate - 0.1) < 3 * se);
}

TEST_CASE("annotation properties over random texts") {
  Rng rng(5);
  const std::vector<std::string> pool = {"a", "b", "c", ".", "!", "?", "d"};
  const AnchorPolicy policies[] = {AnchorPolicy::endpoint(), AnchorPolicy::anchor_token(),
                                   AnchorPolicy::every_n(3), AnchorPolicy::random(0.3, 9)};
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const auto n = rng.below(30);
    for (std::size_t i = 0; i < n; ++i) text += pool[rng.below(pool.size())] + " ";
    for (const auto& policy : policies) {
      const auto v = vocab_for("a b c d . ! ?", policy);
      const auto t = annotate(text, v, policy);
      validate(t);
      CHECK(annotate(text, v, policy) == t);
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (!t.is_anchor[i]) continue;
        const TokenId expected =
            policy.inserts_anchor_token() ? *v.anchor_id() : *v.endpoint_id();
        CHECK(t.ids[i] == expected);
        if (i + 1 < t.size()) CHECK(t.seq_index[i + 1] == t.seq_index[i] + 1);
      }
      if (policy.inserts_anchor_token()) {
        CHECK(strip_inserted_anchors(t, v) == v.encode(text));
      }
    }
  }
}

TEST_CASE("validate rejects broken texts") {
  SegmentedText t;
  t.push_back(1, false, 0);
  t.push_back(1, false, 2);
  CHECK_THROWS_AS(validate(t), ContractError);
  SegmentedText u;
  u.push_back(1, true, 0);
  u.push_back(1, false, 0);
  CHECK_THROWS_AS(validate(u), ContractError);
  SegmentedText w = u;
  w.seq_index.pop_back();
  CHECK_THROWS_AS(validate(w), ContractError);
}

TEST_CASE("packing truncates per document") {
  SegmentedText ten, three;
  for (int i = 0; i < 10; ++i) ten.push_back(i % 5 + 5, false, 0);
  for (int i = 0; i < 3; ++i) three.push_back(6, false, 0);
  std::vector<SegmentedText> docs = {ten};
  auto blocks = pack_training_blocks(docs, 8);
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0] == ten.slice(0, 8));
  docs = {three};
  blocks = pack_training_blocks(docs, 8);
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0] == three);
  CHECK(pack_training_blocks(std::vector<SegmentedText>{}, 8).empty());
}

TEST_CASE("block file round trip") {
  Rng rng(3);
  std::vector<SegmentedText> blocks;
  for (int i = 0; i < 10; ++i) blocks.push_back(support::random_segmented(rng, 1 + rng.below(20), 50));
  CHECK(parse_blocks(serialize_blocks(blocks)) == blocks);
}

TEST_CASE("append continues sequence numbering") {
  SegmentedText a, b;
  a.push_back(5, false, 0);
  a.push_back(4, true, 0);
  b.push_back(6, false, 0);
  b.push_back(4, true, 0);
  a.append(b);
  CHECK(a.seq_index == std::vector<std::int32_t>{0, 0, 1, 1});
  CHECK(a.next_seq_index() == 2);
}

}  // TEST_SUITE
