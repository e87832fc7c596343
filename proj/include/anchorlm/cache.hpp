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
#include <vector>

#include "anchorlm/mask.hpp"
#include "anchorlm/model.hpp"

namespace anchorlm {

struct CacheEntry {
  std::int64_t position = 0;
  bool is_anchor = false;
  std::int32_t seq_index = 0;
  std::vector<std::vector<double>> keys;    // [layer][d_model]
  std::vector<std::vector<double>> values;  // [layer][d_model]
};

struct CacheStats {
  std::size_t peak_live_count = 0;
  std::size_t total_appends = 0;
  std::size_t total_discards = 0;

  bool operator==(const CacheStats&) const = default;
};

// Anchor-aware keys/values cache. Entries are kept in position order; key and
// value rows live in one contiguous matrix per layer, compacted in place on
// reduction.
class AnchorKVCache {
 public:
  AnchorKVCache(std::size_t n_layers, std::size_t d_model,
                std::int64_t protected_upto = 0);

  std::size_t size() const { return meta_.size(); }
  bool empty() const { return meta_.empty(); }
  std::size_t n_layers() const { return keys_.size(); }
  std::size_t d_model() const { return d_model_; }
  std::int64_t protected_upto() const { return protected_upto_; }
  const CacheStats& stats() const { return stats_; }

  std::int64_t position(std::size_t i) const { return meta_[i].position; }
  bool is_anchor(std::size_t i) const { return meta_[i].flags.is_anchor; }
  std::int32_t seq_index(std::size_t i) const { return meta_[i].flags.seq_index; }
  std::vector<std::int64_t> positions() const;
  CacheEntry entry(std::size_t i) const;

  // Throws ContractError unless entry.position is past the last entry.
  void append(const CacheEntry& entry);
  // Appends T rows produced by one forward call.
  void append_block(std::span<const std::int64_t> positions,
                    std::span<const TokenFlags> flags,
                    std::span<const LayerKV> kv);

  // Keeps anchors, protected entries and everything at or after the last
  // unprotected anchor; discards the rest. No-op without such an anchor.
  void reduce();

  PastKV past() const;

 private:
  struct Meta {
    std::int64_t position;
    TokenFlags flags;
  };

  void check_next_position(std::int64_t position) const;
  void note_append(std::size_t n);

  std::size_t d_model_;
  std::int64_t protected_upto_;
  std::vector<Meta> meta_;
  std::vector<std::vector<double>> keys_;
  std::vector<std::vector<double>> values_;
  CacheStats stats_;
};

// Flags of live entries, in position order.
std::vector<TokenFlags> live_flags(const AnchorKVCache& cache);

// Fraction of all appended entries that reductions have discarded.
double cache_reduction_metric(const CacheStats& stats);
inline double cache_reduction_metric(const AnchorKVCache& cache) {
  return cache_reduction_metric(cache.stats());
}

}  // namespace anchorlm
