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
#include <span>

#include "anchorlm/mask.hpp"

// Dense kernels used by the model. The functions in `anchorlm::kernels` are
// OpenMP-parallel; `anchorlm::kernels::serial` holds the single-threaded
// reference versions. Every output element is produced by one thread with
// the same summation order as the reference, so both give bitwise-equal
// results regardless of thread count.
namespace anchorlm::kernels {

// out[r, o] = sum_k x[r, k] * w[o, k]
void matmul_nt(std::span<double> out, std::span<const double> x,
               std::span<const double> w, std::size_t rows, std::size_t in,
               std::size_t out_dim);

// out[r, k] = sum_o dy[r, o] * w[o, k]
void matmul_nn(std::span<double> out, std::span<const double> dy,
               std::span<const double> w, std::size_t rows, std::size_t in,
               std::size_t out_dim);

// dw[o, k] += sum_r dy[r, o] * x[r, k]
void matmul_tn_acc(std::span<double> dw, std::span<const double> dy,
                   std::span<const double> x, std::size_t rows, std::size_t in,
                   std::size_t out_dim);

// Multi-head masked softmax attention.
//   q:    T x d           (row t is the query of new token t)
//   keys, values: K x d   (K = mask.cols(); cache entries then the T tokens)
//   out:  T x d
//   probs (optional): T x H x K attention weights, zero where masked.
// Scores are scaled by 1/sqrt(d / H) and renormalized over unmasked keys.
void masked_attention(std::span<double> out, std::span<double> probs,
                      std::span<const double> q, std::span<const double> keys,
                      std::span<const double> values, const MaskMatrix& mask,
                      std::size_t n_heads, std::size_t d_model);

namespace serial {

void matmul_nt(std::span<double> out, std::span<const double> x,
               std::span<const double> w, std::size_t rows, std::size_t in,
               std::size_t out_dim);
void matmul_nn(std::span<double> out, std::span<const double> dy,
               std::span<const double> w, std::size_t rows, std::size_t in,
               std::size_t out_dim);
void matmul_tn_acc(std::span<double> dw, std::span<const double> dy,
                   std::span<const double> x, std::size_t rows, std::size_t in,
                   std::size_t out_dim);
void masked_attention(std::span<double> out, std::span<double> probs,
                      std::span<const double> q, std::span<const double> keys,
                      std::span<const double> values, const MaskMatrix& mask,
                      std::size_t n_heads, std::size_t d_model);

}  // namespace serial

// Number of OpenMP threads the parallel kernels will use.
int max_threads();

}  // namespace anchorlm::kernels
