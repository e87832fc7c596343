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
#include <optional>
#include <string>
#include <vector>

#include "anchorlm/model.hpp"

namespace anchorlm {

struct OptimizerState {
  std::size_t steps = 0;
  std::size_t tokens_seen = 0;
  std::vector<double> m;
  std::vector<double> v;
};

struct Checkpoint {
  ModelWeights weights;
  std::string vocab_hash;
  std::size_t step = 0;
  std::optional<OptimizerState> optimizer;
};

// Writes <dir>/manifest.txt, <dir>/weights.bin and, when given, <dir>/optim.bin.
// Tensors are raw little-endian float64 in manifest order.
void save_checkpoint(const std::filesystem::path& dir, const ModelWeights& weights,
                     const std::string& vocab_hash, std::size_t step,
                     const OptimizerState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::string manifest_text(const ModelWeights& weights,
                          const std::string& vocab_hash, std::size_t step,
                          const OptimizerState* optimizer);

}  // namespace anchorlm
