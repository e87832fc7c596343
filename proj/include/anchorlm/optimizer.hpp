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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace anchorlm {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

// Adam with decoupled weight decay. Decay applies only where `decay_mask` is
// nonzero.
class AdamW {
 public:
  AdamW(AdamWConfig config, std::vector<std::uint8_t> decay_mask);

  void step(std::span<double> params, std::span<const double> grads, double lr);

  std::size_t steps_taken() const { return t_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  void restore(std::size_t steps, std::vector<double> m, std::vector<double> v);

 private:
  AdamWConfig config_;
  std::vector<std::uint8_t> decay_mask_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

// Linear warmup from 0 to `base` over `warmup` steps, then constant.
// `step` is 1-based.
inline double warmup_lr(double base, std::size_t step, std::size_t warmup) {
  if (warmup == 0 || step >= warmup) return base;
  return base * static_cast<double>(step) / static_cast<double>(warmup);
}

// Scales `grads` in place so that their global L2 norm is at most
// `max_norm`; returns the norm before clipping. max_norm <= 0 disables.
double clip_grad_norm(std::span<double> grads, double max_norm);

}  // namespace anchorlm
