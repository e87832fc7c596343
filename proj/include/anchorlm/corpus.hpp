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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace anchorlm {

using TokenId = std::int32_t;

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kAnchorToken = "<AC>";
inline constexpr std::string_view kEndpointToken = ".";

// How anchor tokens are placed into a token stream.
//
//   kEndpoint   sentence-final '.' tokens are the anchors (no insertion)
//   kAnchor     an <AC> token is appended after every sentence
//   kEveryN     an <AC> token is inserted after every n content tokens
//   kRandom     an <AC> token follows each content token with probability p
struct AnchorPolicy {
  enum class Mode { kEndpoint, kAnchor, kEveryN, kRandom };

  Mode mode = Mode::kEndpoint;
  int n = 0;
  double p = 0.0;
  std::uint64_t seed = 0;

  static AnchorPolicy endpoint() { return {Mode::kEndpoint}; }
  static AnchorPolicy anchor_token() { return {Mode::kAnchor}; }
  static AnchorPolicy every_n(int n);
  static AnchorPolicy random(double p, std::uint64_t seed);

  // "ep", "ac", "every:<n>", "random:<p>[:<seed>]"
  static AnchorPolicy parse(std::string_view text);
  std::string to_string() const;

  // True for every mode that inserts the dedicated <AC> token.
  bool inserts_anchor_token() const { return mode != Mode::kEndpoint; }

  AnchorPolicy with_seed(std::uint64_t s) const {
    AnchorPolicy copy = *this;
    copy.seed = s;
    return copy;
  }

  bool operator==(const AnchorPolicy&) const = default;
};

class Vocab {
 public:
  Vocab() = default;

  // Specials must come first, in the fixed order pad, bos, eos, unk and
  // optionally <AC>.
  static Vocab from_tokens(std::vector<std::string> tokens);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  // One token per line; line number is the id.
  std::string serialize() const;

  std::size_t size() const { return id_to_token_.size(); }
  TokenId id(std::string_view token) const;  // unk when missing
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  TokenId pad_id() const { return 0; }
  TokenId bos_id() const { return 1; }
  TokenId eos_id() const { return 2; }
  TokenId unk_id() const { return 3; }
  std::optional<TokenId> anchor_id() const { return anchor_; }
  std::optional<TokenId> endpoint_id() const { return find(kEndpointToken); }
  std::size_t num_specials() const { return anchor_ ? 5 : 4; }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids, bool strip_anchors) const;

  bool operator==(const Vocab& other) const {
    return id_to_token_ == other.id_to_token_;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::optional<TokenId> anchor_;
};

// Token ids plus per-token anchor flags and sequence indices.
struct SegmentedText {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> is_anchor;
  std::vector<std::int32_t> seq_index;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  void push_back(TokenId id, bool anchor, std::int32_t seq) {
    ids.push_back(id);
    is_anchor.push_back(anchor ? 1 : 0);
    seq_index.push_back(seq);
  }
  // Copy of [begin, end) with seq_index rebased to start at 0.
  SegmentedText slice(std::size_t begin, std::size_t end) const;
  // Appends `other`, shifting its sequence indices so that they continue
  // after this text (a new sequence starts if this text ends in an anchor).
  void append(const SegmentedText& other);
  // Sequence index the next appended token would receive.
  std::int32_t next_seq_index() const;

  bool operator==(const SegmentedText&) const = default;
};

// Throws ContractError when any structural invariant is violated.
void validate(const SegmentedText& text);

// Splits on whitespace; every ASCII punctuation character is its own token.
std::vector<std::string> tokenize(std::string_view text);

// Half-open byte ranges of each sentence. Text between consecutive spans is
// whitespace only.
std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(
    std::string_view text);
std::vector<std::string> split_sentences(std::string_view text);

// `max_size` caps the whole vocab, specials included.
Vocab build_vocab_from_documents(std::span<const std::string> documents,
                                 const AnchorPolicy& policy,
                                 std::size_t max_size);
Vocab build_vocab(std::span<const std::filesystem::path> corpus_paths,
                  const AnchorPolicy& policy, std::size_t max_size);

// One document per non-empty line.
std::vector<std::string> read_documents(const std::filesystem::path& path);

SegmentedText annotate(std::string_view text, const Vocab& vocab,
                       const AnchorPolicy& policy);

// Inserted <AC> tokens removed; flags dropped.
std::vector<TokenId> strip_inserted_anchors(const SegmentedText& text,
                                            const Vocab& vocab);

std::vector<SegmentedText> pack_training_blocks(
    std::span<const SegmentedText> texts, std::size_t context_len);

// Block file: one block per line, "id:flag:seq" triples separated by spaces.
std::string serialize_blocks(std::span<const SegmentedText> blocks);
std::vector<SegmentedText> parse_blocks(std::string_view text);

}  // namespace anchorlm
