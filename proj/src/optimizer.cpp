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

#include "anchorlm/optimizer.hpp"

#include <cmath>

#include "anchorlm/error.hpp"

namespace anchorlm {

AdamW::AdamW(AdamWConfig config, std::vector<std::uint8_t> decay_mask)
    : config_(config),
      decay_mask_(std::move(decay_mask)),
      m_(decay_mask_.size(), 0.0),
      v_(decay_mask_.size(), 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grads,
                 double lr) {
  ANCHORLM_EXPECT(params.size() == m_.size() && grads.size() == m_.size(),
                  "optimizer shape mismatch");
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    double update = mhat / (std::sqrt(vhat) + config_.eps);
    if (decay_mask_[i]) update += config_.weight_decay * params[i];
    params[i] -= lr * update;
  }
}

void AdamW::restore(std::size_t steps, std::vector<double> m,
                    std::vector<double> v) {
  ANCHORLM_EXPECT(m.size() == m_.size() && v.size() == v_.size(),
                  "optimizer state shape mismatch");
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

double clip_grad_norm(std::span<double> grads, double max_norm) {
  double ss = 0.0;
  for (double g : grads) ss += g * g;
  const double norm = std::sqrt(ss);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

}  // namespace anchorlm
