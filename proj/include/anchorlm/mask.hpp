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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anchorlm/corpus.hpp"

namespace anchorlm {

// Per-token annotation consulted by the anchor mask rule.
struct TokenFlags {
  bool is_anchor = false;
  std::int32_t seq_index = 0;

  bool operator==(const TokenFlags&) const = default;
};

std::vector<TokenFlags> token_flags(const SegmentedText& text);

// Row-major binary attention mask: rows are queries, columns are keys. A
// square matrix is the training form; a T x (C + T) matrix masks T new
// tokens against C cached entries followed by the T tokens themselves.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  MaskMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool operator()(std::size_t i, std::size_t j) const {
    return bits_[i * cols_ + j] != 0;
  }
  void set(std::size_t i, std::size_t j, bool v) {
    bits_[i * cols_ + j] = v ? 1 : 0;
  }
  std::span<const std::uint8_t> row(std::size_t i) const {
    return {bits_.data() + i * cols_, cols_};
  }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool operator==(const MaskMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

// One decoding-step mask: one bit per live cache entry, then the self bit.
using MaskRow = std::vector<std::uint8_t>;

// Whether a query may attend to an earlier (or same) key under the anchor
// rule. Keys at or after the query are the caller's concern.
inline bool anchor_visible(TokenFlags query, TokenFlags key) {
  if (key.seq_index < query.seq_index) {
    // Earlier sequences: only their anchors, and only for non-anchor queries.
    return !query.is_anchor && key.is_anchor;
  }
  return true;
}

MaskMatrix causal_mask(std::size_t length);
MaskMatrix anchor_mask(const SegmentedText& text);
MaskMatrix anchor_mask(std::span<const TokenFlags> flags);

MaskRow decode_mask_row(TokenFlags current, std::span<const TokenFlags> live);

// Mask for a block of new tokens appended after live cache entries. With
// `causal` every cached entry is visible; otherwise the anchor rule applies.
MaskMatrix extend_mask(std::span<const TokenFlags> fresh,
                       std::span<const TokenFlags> live, bool causal);

MaskMatrix stack_rows(std::span<const MaskRow> rows);

// Text grid of '0'/'1', one row per line.
std::string to_text(const MaskMatrix& mask);
MaskMatrix mask_from_text(std::string_view text);

}  // namespace anchorlm
