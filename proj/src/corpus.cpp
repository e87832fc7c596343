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

#include "anchorlm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "anchorlm/error.hpp"
#include "anchorlm/util.hpp"

namespace anchorlm {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)); }

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

template <typename T>
T parse_number(std::string_view s, const char* what) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(std::string("bad ") + what + ": '" + std::string(s) +
                      "'");
  }
  return value;
}

}  // namespace

AnchorPolicy AnchorPolicy::every_n(int n) {
  if (n < 1) throw ConfigError("every-n anchor policy requires n >= 1");
  AnchorPolicy p;
  p.mode = Mode::kEveryN;
  p.n = n;
  return p;
}

AnchorPolicy AnchorPolicy::random(double prob, std::uint64_t seed) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw ConfigError("random anchor policy requires 0 < p < 1");
  }
  AnchorPolicy p;
  p.mode = Mode::kRandom;
  p.p = prob;
  p.seed = seed;
  return p;
}

AnchorPolicy AnchorPolicy::parse(std::string_view text) {
  if (text == "ep") return endpoint();
  if (text == "ac") return anchor_token();
  if (text.starts_with("every:")) {
    return every_n(parse_number<int>(text.substr(6), "anchor interval"));
  }
  if (text.starts_with("random:")) {
    auto rest = text.substr(7);
    std::uint64_t seed = 0;
    if (auto colon = rest.find(':'); colon != std::string_view::npos) {
      seed = parse_number<std::uint64_t>(rest.substr(colon + 1), "seed");
      rest = rest.substr(0, colon);
    }
    return random(parse_number<double>(rest, "anchor probability"), seed);
  }
  throw ConfigError("unknown anchor policy '" + std::string(text) +
                    "' (expected ep, ac, every:<n>, random:<p>[:<seed>])");
}

std::string AnchorPolicy::to_string() const {
  switch (mode) {
    case Mode::kEndpoint:
      return "ep";
    case Mode::kAnchor:
      return "ac";
    case Mode::kEveryN:
      return "every:" + std::to_string(n);
    case Mode::kRandom: {
      std::ostringstream os;
      os << "random:" << p << ":" << seed;
      return os.str();
    }
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Vocab

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 4 || tokens[0] != kPadToken || tokens[1] != kBosToken ||
      tokens[2] != kEosToken || tokens[3] != kUnkToken) {
    throw InputError("vocab must start with <pad> <bos> <eos> <unk>");
  }
  Vocab v;
  v.id_to_token_ = std::move(tokens);
  for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
    auto [it, inserted] =
        v.token_to_id_.emplace(v.id_to_token_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw InputError("duplicate vocab token '" + v.id_to_token_[i] + "'");
    }
  }
  if (v.id_to_token_.size() > 4 && v.id_to_token_[4] == kAnchorToken) {
    v.anchor_ = 4;
  } else if (v.token_to_id_.contains(std::string(kAnchorToken))) {
    throw InputError("<AC> must directly follow the other special tokens");
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read vocab file " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& t : id_to_token_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write vocab file " + path.string());
  out << serialize();
}

TokenId Vocab::id(std::string_view token) const {
  return find(token).value_or(unk_id());
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ContractError("token id out of range: " + std::to_string(id));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& t : tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids,
                          bool strip_anchors) const {
  std::string out;
  for (TokenId id : ids) {
    if (strip_anchors && anchor_ && id == *anchor_) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SegmentedText

SegmentedText SegmentedText::slice(std::size_t begin, std::size_t end) const {
  SegmentedText out;
  end = std::min(end, size());
  if (begin >= end) return out;
  const std::int32_t base = seq_index[begin];
  for (std::size_t i = begin; i < end; ++i) {
    out.push_back(ids[i], is_anchor[i] != 0, seq_index[i] - base);
  }
  return out;
}

std::int32_t SegmentedText::next_seq_index() const {
  if (empty()) return 0;
  return seq_index.back() + (is_anchor.back() ? 1 : 0);
}

void SegmentedText::append(const SegmentedText& other) {
  if (other.empty()) return;
  const std::int32_t shift = next_seq_index() - other.seq_index.front();
  for (std::size_t i = 0; i < other.size(); ++i) {
    push_back(other.ids[i], other.is_anchor[i] != 0,
              other.seq_index[i] + shift);
  }
}

void validate(const SegmentedText& text) {
  const std::size_t n = text.ids.size();
  if (text.is_anchor.size() != n || text.seq_index.size() != n) {
    throw ContractError("segmented text lists differ in length");
  }
  for (std::size_t i = 1; i < n; ++i) {
    const auto step = text.seq_index[i] - text.seq_index[i - 1];
    if (step != 0 && step != 1) {
      throw ContractError("seq_index must increase in steps of 0 or 1");
    }
    if (text.is_anchor[i - 1] && step != 1) {
      throw ContractError("token after an anchor must start a new sequence");
    }
  }
}

// ---------------------------------------------------------------------------
// Tokenization and sentences

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      word += c;
    }
  }
  flush();
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(
    std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_space(text[i])) ++i;
    if (i >= n) break;
    const std::size_t begin = i;
    std::size_t end = n;
    for (; i < n; ++i) {
      if (is_terminator(text[i]) && (i + 1 == n || is_space(text[i + 1]))) {
        end = i + 1;
        break;
      }
    }
    // Trailing segment: trim whitespace at end-of-text.
    if (end == n) {
      while (end > begin && is_space(text[end - 1])) --end;
    }
    spans.emplace_back(begin, end);
    i = end;
  }
  return spans;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  for (auto [b, e] : sentence_spans(text)) {
    out.emplace_back(text.substr(b, e - b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary construction

Vocab build_vocab_from_documents(std::span<const std::string> documents,
                                 const AnchorPolicy& policy,
                                 std::size_t max_size) {
  const std::size_t specials = policy.inserts_anchor_token() ? 5 : 4;
  if (max_size <= specials) {
    throw ConfigError("vocab max_size must exceed the " + std::to_string(specials) +
                      " special tokens");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : documents) {
    for (auto& t : tokenize(doc)) ++counts[std::move(t)];
  }
  if (counts.empty()) throw EmptyCorpusError("corpus contains no tokens");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  // std::map iteration is lexicographic, so a stable sort by count keeps
  // lexicographic order among ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens{std::string(kPadToken), std::string(kBosToken),
                                  std::string(kEosToken), std::string(kUnkToken)};
  if (policy.inserts_anchor_token()) tokens.emplace_back(kAnchorToken);
  for (std::size_t i = 0; i < ranked.size() && tokens.size() < max_size; ++i) {
    tokens.push_back(ranked[i].first);
  }
  return Vocab::from_tokens(std::move(tokens));
}

std::vector<std::string> read_documents(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read corpus file " + path.string());
  std::vector<std::string> docs;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) {
      docs.push_back(std::move(line));
    }
  }
  return docs;
}

Vocab build_vocab(std::span<const std::filesystem::path> corpus_paths,
                  const AnchorPolicy& policy, std::size_t max_size) {
  std::vector<std::string> docs;
  for (const auto& path : corpus_paths) {
    auto more = read_documents(path);
    docs.insert(docs.end(), std::make_move_iterator(more.begin()),
                std::make_move_iterator(more.end()));
  }
  return build_vocab_from_documents(docs, policy, max_size);
}

// ---------------------------------------------------------------------------
// Anchor annotation

SegmentedText annotate(std::string_view text, const Vocab& vocab,
                       const AnchorPolicy& policy) {
  SegmentedText out;
  std::int32_t seq = 0;

  if (policy.mode == AnchorPolicy::Mode::kEndpoint) {
    const auto endpoint = vocab.endpoint_id();
    if (!endpoint) throw ConfigError("EP policy needs '.' in the vocab");
    for (auto [b, e] : sentence_spans(text)) {
      const auto words = tokenize(text.substr(b, e - b));
      for (std::size_t i = 0; i < words.size(); ++i) {
        const bool anchor = i + 1 == words.size() && words[i] == kEndpointToken;
        out.push_back(vocab.id(words[i]), anchor, seq);
        if (anchor) ++seq;
      }
    }
    return out;
  }

  const auto anchor_id = vocab.anchor_id();
  if (!anchor_id) {
    throw ConfigError("policy " + policy.to_string() +
                      " needs a vocab built with the <AC> token");
  }
  auto close_sequence = [&] {
    out.push_back(*anchor_id, true, seq);
    ++seq;
  };

  switch (policy.mode) {
    case AnchorPolicy::Mode::kAnchor:
      for (auto [b, e] : sentence_spans(text)) {
        for (const auto& w : tokenize(text.substr(b, e - b))) {
          out.push_back(vocab.id(w), false, seq);
        }
        close_sequence();
      }
      break;
    case AnchorPolicy::Mode::kEveryN: {
      int run = 0;
      for (const auto& w : tokenize(text)) {
        out.push_back(vocab.id(w), false, seq);
        if (++run == policy.n) {
          close_sequence();
          run = 0;
        }
      }
      break;
    }
    case AnchorPolicy::Mode::kRandom: {
      Rng rng(policy.seed);
      for (const auto& w : tokenize(text)) {
        out.push_back(vocab.id(w), false, seq);
        if (rng.bernoulli(policy.p)) close_sequence();
      }
      break;
    }
    case AnchorPolicy::Mode::kEndpoint:
      break;
  }
  return out;
}

std::vector<TokenId> strip_inserted_anchors(const SegmentedText& text,
                                            const Vocab& vocab) {
  const auto anchor_id = vocab.anchor_id();
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (TokenId id : text.ids) {
    if (anchor_id && id == *anchor_id) continue;
    out.push_back(id);
  }
  return out;
}

std::vector<SegmentedText> pack_training_blocks(
    std::span<const SegmentedText> texts, std::size_t context_len) {
  if (context_len < 2) throw ContractError("context_len must be >= 2");
  std::vector<SegmentedText> blocks;
  for (const auto& t : texts) {
    if (t.empty()) continue;
    blocks.push_back(t.slice(0, std::min(context_len, t.size())));
  }
  return blocks;
}

std::string serialize_blocks(std::span<const SegmentedText> blocks) {
  std::string out;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(b.ids[i]);
      out += ':';
      out += b.is_anchor[i] ? '1' : '0';
      out += ':';
      out += std::to_string(b.seq_index[i]);
    }
    out += '\n';
  }
  return out;
}

std::vector<SegmentedText> parse_blocks(std::string_view text) {
  std::vector<SegmentedText> blocks;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    SegmentedText block;
    std::istringstream in{std::string(line)};
    for (std::string triple; in >> triple;) {
      const auto a = triple.find(':');
      const auto b = triple.find(':', a + 1);
      if (a == std::string::npos || b == std::string::npos) {
        throw InputError("malformed block line " + std::to_string(line_no));
      }
      const std::string_view tv = triple;
      const auto id = parse_number<TokenId>(tv.substr(0, a), "token id");
      const auto flag = parse_number<int>(tv.substr(a + 1, b - a - 1), "flag");
      const auto seq = parse_number<std::int32_t>(tv.substr(b + 1), "seq");
      block.push_back(id, flag != 0, seq);
    }
    if (!block.empty()) {
      validate(block);
      blocks.push_back(std::move(block));
    }
  }
  return blocks;
}

}  // namespace anchorlm
