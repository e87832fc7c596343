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

#include "anchorlm/mask.hpp"

#include "anchorlm/error.hpp"

namespace anchorlm {

std::vector<TokenFlags> token_flags(const SegmentedText& text) {
  std::vector<TokenFlags> flags(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    flags[i] = {text.is_anchor[i] != 0, text.seq_index[i]};
  }
  return flags;
}

MaskMatrix causal_mask(std::size_t length) {
  MaskMatrix m(length, length);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
  }
  return m;
}

MaskMatrix anchor_mask(std::span<const TokenFlags> flags) {
  const std::size_t n = flags.size();
  MaskMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      m.set(i, j, anchor_visible(flags[i], flags[j]));
    }
  }
  return m;
}

MaskMatrix anchor_mask(const SegmentedText& text) {
  return anchor_mask(token_flags(text));
}

MaskRow decode_mask_row(TokenFlags current, std::span<const TokenFlags> live) {
  MaskRow row(live.size() + 1, 1);
  for (std::size_t e = 0; e < live.size(); ++e) {
    row[e] = anchor_visible(current, live[e]) ? 1 : 0;
  }
  return row;
}

MaskMatrix extend_mask(std::span<const TokenFlags> fresh,
                       std::span<const TokenFlags> live, bool causal) {
  const std::size_t t = fresh.size();
  const std::size_t c = live.size();
  MaskMatrix m(t, c + t);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t e = 0; e < c; ++e) {
      m.set(i, e, causal || anchor_visible(fresh[i], live[e]));
    }
    for (std::size_t j = 0; j <= i; ++j) {
      m.set(i, c + j, causal || anchor_visible(fresh[i], fresh[j]));
    }
  }
  return m;
}

MaskMatrix stack_rows(std::span<const MaskRow> rows) {
  if (rows.empty()) return {};
  MaskMatrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ANCHORLM_EXPECT(rows[i].size() == m.cols(), "mask rows differ in width");
    for (std::size_t j = 0; j < m.cols(); ++j) m.set(i, j, rows[i][j] != 0);
  }
  return m;
}

std::string to_text(const MaskMatrix& mask) {
  std::string out;
  out.reserve(mask.rows() * (mask.cols() + 1));
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) out += mask(i, j) ? '1' : '0';
    out += '\n';
  }
  return out;
}

MaskMatrix mask_from_text(std::string_view text) {
  std::vector<MaskRow> rows;
  MaskRow current;
  for (char c : text) {
    if (c == '0' || c == '1') {
      current.push_back(c == '1');
    } else if (c == '\n') {
      if (!current.empty()) rows.push_back(std::move(current));
      current.clear();
    } else if (c != '\r' && c != ' ') {
      throw InputError("mask text may only contain '0' and '1'");
    }
  }
  if (!current.empty()) rows.push_back(std::move(current));
  return stack_rows(rows);
}

}  // namespace anchorlm
