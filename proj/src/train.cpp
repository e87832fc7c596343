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

#include "anchorlm/train.hpp"

#include <omp.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "anchorlm/error.hpp"
#include "anchorlm/eval.hpp"
#include "anchorlm/util.hpp"

namespace anchorlm {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(std::string_view key, std::string_view s) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("bad value for '" + std::string(key) + "': '" +
                      std::string(s) + "'");
  }
  return value;
}

std::uint64_t digest_doubles(std::span<const double> xs) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(xs.data()),
                                  xs.size() * sizeof(double)));
}

}  // namespace

MaskMode parse_mask_mode(std::string_view text) {
  if (text == "causal") return MaskMode::kCausal;
  if (text == "ansan") return MaskMode::kAnsan;
  throw UsageError("mask mode must be 'causal' or 'ansan', got '" +
                   std::string(text) + "'");
}

std::string_view to_string(MaskMode mode) {
  return mode == MaskMode::kCausal ? "causal" : "ansan";
}

MaskMatrix training_mask(const SegmentedText& block, MaskMode mode) {
  return mode == MaskMode::kAnsan ? anchor_mask(block)
                                  : causal_mask(block.size());
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  // A zero rate is accepted so that a step can be checked as a no-op.
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in (0, 1)");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (steps == 0 && epochs == 0) {
    throw ConfigError("either steps or epochs must be positive");
  }
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

std::size_t TrainConfig::total_steps(std::size_t n_blocks) const {
  if (steps > 0) return steps;
  return epochs * ((n_blocks + batch_size - 1) / batch_size);
}

TrainConfig TrainConfig::parse(std::string_view text, TrainConfig c) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        " is not 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto val = trim(line.substr(eq + 1));
    if (key == "mask_mode") {
      c.mask_mode = parse_mask_mode(val);
    } else if (key == "policy") {
      c.policy = AnchorPolicy::parse(val);
    } else if (key == "batch_size") {
      c.batch_size = parse_value<std::size_t>(key, val);
    } else if (key == "steps") {
      c.steps = parse_value<std::size_t>(key, val);
    } else if (key == "epochs") {
      c.epochs = parse_value<std::size_t>(key, val);
    } else if (key == "learning_rate") {
      c.learning_rate = parse_value<double>(key, val);
    } else if (key == "warmup_steps") {
      c.warmup_steps = parse_value<std::size_t>(key, val);
    } else if (key == "adam_beta1") {
      c.adam_beta1 = parse_value<double>(key, val);
    } else if (key == "adam_beta2") {
      c.adam_beta2 = parse_value<double>(key, val);
    } else if (key == "weight_decay") {
      c.weight_decay = parse_value<double>(key, val);
    } else if (key == "grad_clip") {
      c.grad_clip = parse_value<double>(key, val);
    } else if (key == "seed") {
      c.seed = parse_value<std::uint64_t>(key, val);
    } else if (key == "checkpoint_every") {
      c.checkpoint_every = parse_value<std::size_t>(key, val);
    } else {
      throw ConfigError("unknown train config key '" + std::string(key) + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::parse(std::string_view text) {
  return parse(text, TrainConfig{});
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "mask_mode = " << to_string(mask_mode) << "\n"
     << "policy = " << policy.to_string() << "\n"
     << "batch_size = " << batch_size << "\n"
     << "steps = " << steps << "\n"
     << "epochs = " << epochs << "\n"
     << "learning_rate = " << fmt_double(learning_rate) << "\n"
     << "warmup_steps = " << warmup_steps << "\n"
     << "adam_beta1 = " << fmt_double(adam_beta1) << "\n"
     << "adam_beta2 = " << fmt_double(adam_beta2) << "\n"
     << "weight_decay = " << fmt_double(weight_decay) << "\n"
     << "grad_clip = " << fmt_double(grad_clip) << "\n"
     << "seed = " << seed << "\n"
     << "checkpoint_every = " << checkpoint_every << "\n";
  return os.str();
}

std::vector<double> TrainReport::losses() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.loss);
  return out;
}

std::string format_step_log(std::span<const StepRecord> steps,
                            bool include_wall) {
  std::string out;
  for (const auto& s : steps) {
    char buf[160];
    if (include_wall) {
      std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.17g\t%.3f\n", s.step,
                    s.loss, s.lr, s.wall_ms);
    } else {
      std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.17g\n", s.step, s.loss,
                    s.lr);
    }
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batching

std::vector<std::size_t> batch_schedule(std::uint64_t seed, std::size_t step,
                                        std::size_t batch_size,
                                        std::size_t n_blocks) {
  ANCHORLM_EXPECT(step >= 1, "steps are 1-based");
  ANCHORLM_EXPECT(n_blocks > 0, "no training blocks");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::size_t cached_epoch = SIZE_MAX;
  std::vector<std::size_t> perm;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t k = (step - 1) * batch_size + b;
    const std::size_t epoch = k / n_blocks;
    if (epoch != cached_epoch) {
      perm.resize(n_blocks);
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(mix_seed(seed, epoch));
      for (std::size_t i = n_blocks; i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.below(i)]);
      }
      cached_epoch = epoch;
    }
    out.push_back(perm[k % n_blocks]);
  }
  return out;
}

BatchResult batch_loss_and_grads(const ModelWeights& weights,
                                 std::span<const SegmentedText> blocks,
                                 std::span<const std::size_t> indices,
                                 MaskMode mode, bool parallel) {
  const std::size_t n = indices.size();
  ANCHORLM_EXPECT(n > 0, "empty batch");
  std::vector<LossAndGrads> parts(n);
  for (auto i : indices) ANCHORLM_EXPECT(i < blocks.size(), "block index out of range");

  // Exceptions may not leave an OpenMP region; collect the first one.
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic) if (parallel && n > 1)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(n); ++b) {
    const auto u = static_cast<std::size_t>(b);
    try {
      const auto& block = blocks[indices[u]];
      parts[u] = loss_and_grads(weights, block, training_mask(block, mode));
    } catch (...) {
      errors[u] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BatchResult res;
  res.grads.assign(weights.params.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t b = 0; b < n; ++b) {
    res.loss += parts[b].loss;
    res.tokens += blocks[indices[b]].size();
    const auto& g = parts[b].grads;
    for (std::size_t i = 0; i < g.size(); ++i) res.grads[i] += g[i];
  }
  res.loss *= inv;
  for (double& g : res.grads) g *= inv;
  return res;
}

// ---------------------------------------------------------------------------
// Trainer

std::vector<std::uint8_t> weight_decay_mask(const ModelWeights& weights) {
  std::vector<std::uint8_t> mask(weights.params.size(), 0);
  for (const auto& t : weights.layout.tensors) {
    if (t.rows > 1) std::fill_n(mask.begin() + t.offset, t.size(), 1);
  }
  return mask;
}

Trainer::Trainer(TrainConfig config, ModelWeights weights)
    : config_(std::move(config)),
      weights_(std::move(weights)),
      optimizer_({config_.adam_beta1, config_.adam_beta2, 1e-8,
                  config_.weight_decay},
                 weight_decay_mask(weights_)) {
  config_.validate();
}

void Trainer::restore(std::size_t step, std::size_t tokens,
                      std::vector<double> m, std::vector<double> v) {
  optimizer_.restore(step, std::move(m), std::move(v));
  step_ = step;
  tokens_ = tokens;
}

StepRecord Trainer::step(std::span<const SegmentedText> blocks) {
  const auto start = Clock::now();
  const std::size_t s = step_ + 1;
  const auto idx = batch_schedule(mix_seed(config_.seed, 1), s,
                                  config_.batch_size, blocks.size());
  auto batch = batch_loss_and_grads(weights_, blocks, idx, config_.mask_mode);
  if (!std::isfinite(batch.loss)) {
    throw NumericError("training diverged at step " + std::to_string(s) +
                       ": loss is " + fmt_double(batch.loss));
  }
  clip_grad_norm(batch.grads, config_.grad_clip);
  const double lr = warmup_lr(config_.learning_rate, s, config_.warmup_steps);
  optimizer_.step(weights_.params, batch.grads, lr);
  step_ = s;
  tokens_ += batch.tokens;
  StepRecord rec;
  rec.step = s;
  rec.loss = batch.loss;
  rec.lr = lr;
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  return rec;
}

TrainReport train_from(Trainer& trainer, std::span<const SegmentedText> blocks,
                       const TrainHooks& hooks) {
  if (blocks.empty()) throw ContractError("training needs at least one block");
  for (const auto& b : blocks) {
    if (b.size() < 2) throw ContractError("training blocks need >= 2 tokens");
  }
  const auto start = Clock::now();
  TrainReport report;
  report.initial_weights_digest = digest_doubles(trainer.weights().params);
  std::uint64_t sched = 0xcbf29ce484222325ULL;
  const std::size_t total = trainer.config().total_steps(blocks.size());
  while (trainer.steps_done() < total) {
    const auto idx =
        batch_schedule(mix_seed(trainer.config().seed, 1),
                       trainer.steps_done() + 1, trainer.config().batch_size,
                       blocks.size());
    for (auto i : idx) sched = mix_seed(sched, i);
    const auto rec = trainer.step(blocks);
    report.steps.push_back(rec);
    if (hooks.on_step) hooks.on_step(trainer, rec);
  }
  report.schedule_digest = sched;
  report.tokens_seen = trainer.tokens_seen();
  report.wall_ms =
      std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  return report;
}

TrainReport train(const TrainConfig& config, const ModelConfig& model_config,
                  std::span<const SegmentedText> blocks,
                  std::optional<TokenId> anchor_id, const TrainHooks& hooks) {
  config.validate();
  Trainer trainer(config, init_weights(model_config, config.seed, anchor_id));
  return train_from(trainer, blocks, hooks);
}

// ---------------------------------------------------------------------------
// From-scratch comparison

std::string FromScratchReport::to_text() const {
  std::ostringstream os;
  os << "# from-scratch comparison: causal vs anchor-mask training\n"
     << "# reference (large-scale, not a target): ansan ppl "
     << reference::kScratchPerplexityAnsan << ", causal ppl "
     << reference::kScratchPerplexityCausal << "\n"
     << "identical_initial_weights = "
     << (identical_initial_weights ? "true" : "false") << "\n"
     << "identical_batch_schedule = "
     << (identical_batch_schedule ? "true" : "false") << "\n"
     << "arm\tsteps\tfirst_loss\tfinal_loss\tperplexity\n";
  for (const FromScratchArm* arm : {&causal, &ansan}) {
    const auto& st = arm->report.steps;
    os << to_string(arm->mode) << "\t" << st.size() << "\t"
       << fmt_double(st.empty() ? 0.0 : st.front().loss) << "\t"
       << fmt_double(st.empty() ? 0.0 : st.back().loss) << "\t"
       << fmt_double(arm->perplexity) << "\n";
  }
  return os.str();
}

FromScratchReport compare_from_scratch(
    const ModelConfig& model_config, std::span<const SegmentedText> train_blocks,
    std::span<const SegmentedText> eval_texts, const TrainConfig& base,
    const ScratchBudget& budget, std::optional<TokenId> anchor_id) {
  FromScratchReport out;
  TrainConfig cfg = base;
  cfg.steps = budget.steps;
  cfg.batch_size = budget.batch_size;
  const std::optional<TokenId> excluded =
      base.policy.inserts_anchor_token() ? anchor_id : std::nullopt;

  auto run_arm = [&](MaskMode mode) {
    FromScratchArm arm;
    arm.mode = mode;
    cfg.mask_mode = mode;
    Trainer trainer(cfg, init_weights(model_config, cfg.seed, anchor_id));
    arm.report = train_from(trainer, train_blocks);
    arm.perplexity = perplexity(trainer.weights(), eval_texts, mode,
                                budget.eval_context_len, excluded)
                         .perplexity;
    if (!std::isfinite(arm.perplexity)) {
      throw NumericError("non-finite perplexity in the " +
                         std::string(to_string(mode)) + " arm");
    }
    return arm;
  };
  out.causal = run_arm(MaskMode::kCausal);
  out.ansan = run_arm(MaskMode::kAnsan);
  out.identical_initial_weights = out.causal.report.initial_weights_digest ==
                                  out.ansan.report.initial_weights_digest;
  out.identical_batch_schedule =
      out.causal.report.schedule_digest == out.ansan.report.schedule_digest;
  return out;
}

}  // namespace anchorlm
