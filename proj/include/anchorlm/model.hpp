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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anchorlm/corpus.hpp"
#include "anchorlm/mask.hpp"

namespace anchorlm {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t context_len = 256;
  double rope_base = 10000.0;
  double norm_eps = 1e-5;

  std::size_t head_dim() const { return d_model / n_heads; }
  // Throws ConfigError.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Offsets of one named tensor inside the flat parameter vector.
struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

struct LayerLayout {
  std::size_t attn_norm, wq, wk, wv, wo, ffn_norm, w1, w2;
};

// Parameter layout: token embedding, then per layer
// {attn_norm, wq, wk, wv, wo, ffn_norm, w1, w2}, then final_norm and head.
// Projection matrices are stored [out, in], row-major.
struct ParamLayout {
  std::size_t tok_emb = 0;
  std::vector<LayerLayout> layers;
  std::size_t final_norm = 0;
  std::size_t head = 0;
  std::size_t total = 0;
  std::vector<TensorInfo> tensors;

  static ParamLayout make(const ModelConfig& config);
};

struct ModelWeights {
  ModelConfig config;
  ParamLayout layout;
  std::vector<double> params;

  std::span<const double> tensor(std::size_t offset, std::size_t n) const {
    return {params.data() + offset, n};
  }
  std::span<double> tensor(std::size_t offset, std::size_t n) {
    return {params.data() + offset, n};
  }
  bool operator==(const ModelWeights& other) const {
    return config == other.config && params == other.params;
  }
};

// Scaled-normal (std 0.02) projections and embeddings, unit norm gains. When
// `anchor_id` is given its embedding row is reset to the mean of the other
// rows.
ModelWeights init_weights(const ModelConfig& config, std::uint64_t seed,
                          std::optional<TokenId> anchor_id = std::nullopt);

// Read-only view of previously cached keys/values: `count` rows of d_model
// per layer, in position order. Keys are stored after the rotary transform.
struct PastKV {
  std::size_t count = 0;
  std::vector<std::span<const double>> keys;
  std::vector<std::span<const double>> values;
};

struct LayerKV {
  std::vector<double> keys;    // T x d_model, rotary applied
  std::vector<double> values;  // T x d_model
};

struct ForwardOutput {
  std::size_t rows = 0;
  std::size_t vocab = 0;
  std::vector<double> logits;  // rows x vocab
  std::vector<LayerKV> new_kv;

  std::span<const double> row(std::size_t t) const {
    return {logits.data() + t * vocab, vocab};
  }
};

// Runs T tokens through the model. `mask` is T x (past.count + T);
// `positions` are absolute and used for the rotary encoding.
ForwardOutput forward(const ModelWeights& weights, std::span<const TokenId> ids,
                      std::span<const std::int64_t> positions,
                      const MaskMatrix& mask, const PastKV& past = {});

struct LossAndGrads {
  double loss = 0.0;
  std::vector<double> grads;  // same layout as ModelWeights::params
};

// Mean next-token cross-entropy over positions 0..L-2 and its exact gradient.
LossAndGrads loss_and_grads(const ModelWeights& weights,
                            const SegmentedText& block, const MaskMatrix& mask);
double loss_only(const ModelWeights& weights, std::span<const TokenId> ids,
                 const MaskMatrix& mask);

// log softmax of one logits row, evaluated at `target`.
double log_prob(std::span<const double> logits, TokenId target);

}  // namespace anchorlm
