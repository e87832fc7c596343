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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anchorlm/corpus.hpp"
#include "anchorlm/model.hpp"
#include "anchorlm/train.hpp"

namespace anchorlm {

// Reference values reported alongside desk-scale results; never asserted.
namespace reference {
inline constexpr double kCacheReductionEp = 0.90;
inline constexpr double kCacheReductionAc = 0.99;
inline constexpr double kAccelerationAverage = 1.7;
inline constexpr double kAccelerationMax = 3.5;
inline constexpr double kScratchPerplexityAnsan = 32.81;
inline constexpr double kScratchPerplexityCausal = 36.57;
}  // namespace reference

struct MetricsReport {
  std::string task;
  std::optional<double> accuracy;
  std::optional<double> perplexity;
  double cache_reduction = 0.0;
  std::optional<double> acceleration_ratio;
  std::optional<double> acceleration_vs_full_cache;
  std::size_t peak_cache = 0;
  std::size_t items = 0;
  std::size_t skipped = 0;
  std::size_t scored_tokens = 0;
  std::map<std::string, std::string> config;  // policy, mask mode, shots, ...
  std::map<std::string, double> wall_ms;

  void validate() const;
  // Pretty JSON with a fixed key order. Wall-clock fields are emitted only
  // with `include_wall`, so that reports compare byte-for-byte.
  std::string to_text(bool include_wall = false) const;
};

struct PerplexityResult {
  double perplexity = 0.0;
  double mean_nll = 0.0;
  std::size_t scored = 0;
};

// exp(mean next-token NLL) over non-overlapping windows of
// `eval_context_len`. Targets equal to `excluded_id` (inserted anchors) stay
// in the stream but are left out of the average.
PerplexityResult perplexity(const ModelWeights& weights,
                            std::span<const SegmentedText> texts, MaskMode mode,
                            std::size_t eval_context_len,
                            std::optional<TokenId> excluded_id);
PerplexityResult perplexity(const ModelWeights& weights,
                            const SegmentedText& text, MaskMode mode,
                            std::size_t eval_context_len,
                            std::optional<TokenId> excluded_id);

struct McItem {
  std::string context;
  std::vector<std::string> choices;
  std::size_t gold = 0;

  bool operator==(const McItem&) const = default;
};

// One JSON object per line: {"context": ..., "choices": [...], "gold": n}.
std::vector<McItem> parse_mc_items(std::string_view jsonl);
std::vector<McItem> load_mc_items(const std::filesystem::path& path);
std::string serialize_mc_items(std::span<const McItem> items);

struct McTaskConfig {
  std::size_t shots = 0;
  AnchorPolicy policy = AnchorPolicy::anchor_token();
  bool use_ansan = true;
  bool reuse_demo_cache = true;
  std::uint64_t seed = 0;
  // Timing runs for the acceleration ratio; min-of-N is reported.
  bool measure_speed = false;
  std::size_t timing_repeats = 3;
};

// Demonstrations prefix: each demonstration is "context gold-choice";
// under the <AC> policy every demonstration ends with one anchor, otherwise
// the policy annotates the demonstration text.
SegmentedText build_demonstrations(std::span<const McItem> demos,
                                   const Vocab& vocab,
                                   const AnchorPolicy& policy);
// Shots drawn from the pool without replacement by a seeded shuffle.
std::vector<McItem> draw_demonstrations(std::span<const McItem> pool,
                                        std::size_t shots, std::uint64_t seed);

struct McOutcome {
  MetricsReport report;
  std::vector<std::size_t> predictions;  // per item; SIZE_MAX when skipped
  std::vector<std::vector<double>> scores;
  std::vector<std::size_t> item_order;
};

McOutcome run_mc_task(const ModelWeights& weights, const Vocab& vocab,
                      std::span<const McItem> items,
                      std::span<const McItem> demo_pool,
                      const McTaskConfig& cfg);

struct AblationArm {
  std::string name;
  AnchorPolicy policy;
  const ModelWeights* weights = nullptr;
};

struct AblationReport {
  std::vector<std::string> names;
  std::vector<McOutcome> outcomes;
  bool matched_item_order = false;

  std::string to_text() const;
};

AblationReport ablation_anchor_positions(std::span<const AblationArm> arms,
                                         const Vocab& vocab,
                                         std::span<const McItem> items,
                                         std::span<const McItem> demo_pool,
                                         McTaskConfig cfg);

}  // namespace anchorlm
