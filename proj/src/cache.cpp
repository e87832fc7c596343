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

#include "anchorlm/cache.hpp"

#include <algorithm>

#include "anchorlm/error.hpp"

namespace anchorlm {

AnchorKVCache::AnchorKVCache(std::size_t n_layers, std::size_t d_model,
                             std::int64_t protected_upto)
    : d_model_(d_model),
      protected_upto_(protected_upto),
      keys_(n_layers),
      values_(n_layers) {
  ANCHORLM_EXPECT(protected_upto >= 0, "protected_upto must be >= 0");
}

std::vector<std::int64_t> AnchorKVCache::positions() const {
  std::vector<std::int64_t> out(meta_.size());
  for (std::size_t i = 0; i < meta_.size(); ++i) out[i] = meta_[i].position;
  return out;
}

CacheEntry AnchorKVCache::entry(std::size_t i) const {
  CacheEntry e;
  e.position = meta_[i].position;
  e.is_anchor = meta_[i].flags.is_anchor;
  e.seq_index = meta_[i].flags.seq_index;
  for (std::size_t l = 0; l < n_layers(); ++l) {
    const auto* k = keys_[l].data() + i * d_model_;
    const auto* v = values_[l].data() + i * d_model_;
    e.keys.emplace_back(k, k + d_model_);
    e.values.emplace_back(v, v + d_model_);
  }
  return e;
}

void AnchorKVCache::check_next_position(std::int64_t position) const {
  if (!meta_.empty() && position <= meta_.back().position) {
    throw ContractError("cache append at position " + std::to_string(position) +
                        " after position " +
                        std::to_string(meta_.back().position));
  }
  if (position < 0) throw ContractError("cache positions must be >= 0");
}

void AnchorKVCache::note_append(std::size_t n) {
  stats_.total_appends += n;
  stats_.peak_live_count = std::max(stats_.peak_live_count, meta_.size());
}

void AnchorKVCache::append(const CacheEntry& entry) {
  check_next_position(entry.position);
  ANCHORLM_EXPECT(entry.keys.size() == n_layers() &&
                      entry.values.size() == n_layers(),
                  "cache entry layer count mismatch");
  for (std::size_t l = 0; l < n_layers(); ++l) {
    ANCHORLM_EXPECT(entry.keys[l].size() == d_model_ &&
                        entry.values[l].size() == d_model_,
                    "cache entry vector width mismatch");
  }
  meta_.push_back({entry.position, {entry.is_anchor, entry.seq_index}});
  for (std::size_t l = 0; l < n_layers(); ++l) {
    keys_[l].insert(keys_[l].end(), entry.keys[l].begin(), entry.keys[l].end());
    values_[l].insert(values_[l].end(), entry.values[l].begin(),
                      entry.values[l].end());
  }
  note_append(1);
}

void AnchorKVCache::append_block(std::span<const std::int64_t> positions,
                                 std::span<const TokenFlags> flags,
                                 std::span<const LayerKV> kv) {
  const std::size_t t = positions.size();
  ANCHORLM_EXPECT(flags.size() == t, "flags length must equal block length");
  ANCHORLM_EXPECT(kv.size() == n_layers(), "layer count mismatch");
  for (std::size_t i = 0; i < t; ++i) {
    check_next_position(positions[i]);
    if (i > 0) {
      ANCHORLM_EXPECT(positions[i] > positions[i - 1],
                      "block positions must increase");
    }
  }
  for (std::size_t l = 0; l < n_layers(); ++l) {
    ANCHORLM_EXPECT(kv[l].keys.size() == t * d_model_ &&
                        kv[l].values.size() == t * d_model_,
                    "cache block width mismatch");
  }
  for (std::size_t i = 0; i < t; ++i) meta_.push_back({positions[i], flags[i]});
  for (std::size_t l = 0; l < n_layers(); ++l) {
    keys_[l].insert(keys_[l].end(), kv[l].keys.begin(), kv[l].keys.end());
    values_[l].insert(values_[l].end(), kv[l].values.begin(),
                      kv[l].values.end());
  }
  note_append(t);
}

void AnchorKVCache::reduce() {
  // Last anchor among unprotected entries.
  std::int64_t last_anchor = -1;
  for (const auto& m : meta_) {
    if (m.flags.is_anchor && m.position >= protected_upto_) {
      last_anchor = m.position;
    }
  }
  if (last_anchor < 0) return;

  std::size_t kept = 0;
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    const Meta& m = meta_[i];
    const bool keep = m.flags.is_anchor || m.position >= last_anchor ||
                      m.position < protected_upto_;
    if (!keep) continue;
    if (kept != i) {
      meta_[kept] = m;
      for (std::size_t l = 0; l < n_layers(); ++l) {
        std::copy_n(keys_[l].begin() + i * d_model_, d_model_,
                    keys_[l].begin() + kept * d_model_);
        std::copy_n(values_[l].begin() + i * d_model_, d_model_,
                    values_[l].begin() + kept * d_model_);
      }
    }
    ++kept;
  }
  stats_.total_discards += meta_.size() - kept;
  meta_.resize(kept);
  for (std::size_t l = 0; l < n_layers(); ++l) {
    keys_[l].resize(kept * d_model_);
    values_[l].resize(kept * d_model_);
  }
}

PastKV AnchorKVCache::past() const {
  PastKV p;
  p.count = meta_.size();
  for (std::size_t l = 0; l < n_layers(); ++l) {
    p.keys.emplace_back(keys_[l].data(), keys_[l].size());
    p.values.emplace_back(values_[l].data(), values_[l].size());
  }
  return p;
}

std::vector<TokenFlags> live_flags(const AnchorKVCache& cache) {
  std::vector<TokenFlags> out(cache.size());
  for (std::size_t i = 0; i < cache.size(); ++i) {
    out[i] = {cache.is_anchor(i), cache.seq_index(i)};
  }
  return out;
}

double cache_reduction_metric(const CacheStats& stats) {
  if (stats.total_appends == 0) {
    throw UndefinedMetricError("cache reduction undefined with zero appends");
  }
  return static_cast<double>(stats.total_discards) /
         static_cast<double>(stats.total_appends);
}

}  // namespace anchorlm
