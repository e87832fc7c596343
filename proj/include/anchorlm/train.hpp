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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anchorlm/corpus.hpp"
#include "anchorlm/model.hpp"
#include "anchorlm/optimizer.hpp"

namespace anchorlm {

enum class MaskMode { kCausal, kAnsan };

MaskMode parse_mask_mode(std::string_view text);
std::string_view to_string(MaskMode mode);

MaskMatrix training_mask(const SegmentedText& block, MaskMode mode);

struct TrainConfig {
  MaskMode mask_mode = MaskMode::kAnsan;
  AnchorPolicy policy = AnchorPolicy::anchor_token();
  std::size_t batch_size = 16;
  // Total optimizer steps. When zero, `epochs` passes over the block list.
  std::size_t steps = 200;
  std::size_t epochs = 1;
  double learning_rate = 3e-4;
  std::size_t warmup_steps = 20;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double weight_decay = 0.1;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 = final checkpoint only

  void validate() const;
  std::size_t total_steps(std::size_t n_blocks) const;

  // "key = value" lines; '#' starts a comment. Unknown keys are an error.
  static TrainConfig parse(std::string_view text, TrainConfig base);
  static TrainConfig parse(std::string_view text);
  std::string to_text() const;
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::string checkpoint_path;
  std::size_t tokens_seen = 0;
  double wall_ms = 0.0;
  std::uint64_t initial_weights_digest = 0;
  std::uint64_t schedule_digest = 0;

  std::vector<double> losses() const;
};

// Line-delimited records "step loss lr wall_ms".
std::string format_step_log(std::span<const StepRecord> steps,
                            bool include_wall);

// Block indices of step `step` (1-based): a seeded permutation of the block
// list per epoch, consumed batch_size at a time.
std::vector<std::size_t> batch_schedule(std::uint64_t seed, std::size_t step,
                                        std::size_t batch_size,
                                        std::size_t n_blocks);

struct BatchResult {
  double loss = 0.0;
  std::vector<double> grads;
  std::size_t tokens = 0;
};

// Mean loss and gradient over the selected blocks. With `parallel` the
// per-block work is spread over OpenMP threads; reduction order is fixed so
// the result is bitwise equal to the serial path.
BatchResult batch_loss_and_grads(const ModelWeights& weights,
                                 std::span<const SegmentedText> blocks,
                                 std::span<const std::size_t> indices,
                                 MaskMode mode, bool parallel = true);

// Owns weights and optimizer state across steps; resumable from a checkpoint.
class Trainer {
 public:
  Trainer(TrainConfig config, ModelWeights weights);

  StepRecord step(std::span<const SegmentedText> blocks);

  const ModelWeights& weights() const { return weights_; }
  const AdamW& optimizer() const { return optimizer_; }
  const TrainConfig& config() const { return config_; }
  std::size_t steps_done() const { return step_; }
  std::size_t tokens_seen() const { return tokens_; }
  void restore(std::size_t step, std::size_t tokens, std::vector<double> m,
               std::vector<double> v);

 private:
  TrainConfig config_;
  ModelWeights weights_;
  AdamW optimizer_;
  std::size_t step_ = 0;
  std::size_t tokens_ = 0;
};

std::vector<std::uint8_t> weight_decay_mask(const ModelWeights& weights);

struct TrainHooks {
  // Called after every step; may write periodic checkpoints.
  std::function<void(const Trainer&, const StepRecord&)> on_step;
};

TrainReport train(const TrainConfig& config, const ModelConfig& model_config,
                  std::span<const SegmentedText> blocks,
                  std::optional<TokenId> anchor_id = std::nullopt,
                  const TrainHooks& hooks = {});

// Continues `trainer` until config().total_steps(...) steps are done.
TrainReport train_from(Trainer& trainer, std::span<const SegmentedText> blocks,
                       const TrainHooks& hooks = {});

// Side-by-side causal vs anchor-mask training from identical initial weights
// and batch schedules.
struct FromScratchArm {
  MaskMode mode = MaskMode::kCausal;
  TrainReport report;
  double perplexity = 0.0;
};

struct FromScratchReport {
  FromScratchArm causal;
  FromScratchArm ansan;
  bool identical_initial_weights = false;
  bool identical_batch_schedule = false;

  std::string to_text() const;
};

struct ScratchBudget {
  std::size_t steps = 100;
  std::size_t batch_size = 16;
  std::size_t eval_context_len = 128;
};

FromScratchReport compare_from_scratch(const ModelConfig& model_config,
                                       std::span<const SegmentedText> train_blocks,
                                       std::span<const SegmentedText> eval_texts,
                                       const TrainConfig& base,
                                       const ScratchBudget& budget,
                                       std::optional<TokenId> anchor_id);

}  // namespace anchorlm
