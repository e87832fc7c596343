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

#include "anchorlm/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "anchorlm/error.hpp"

namespace anchorlm::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 15;

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

inline void matmul_nt_elem(double* out, const double* x, const double* w,
                           std::size_t r, std::size_t o, std::size_t in,
                           std::size_t out_dim) {
  out[r * out_dim + o] = dot(x + r * in, w + o * in, in);
}

inline void matmul_nn_row(double* out, const double* dy, const double* w,
                          std::size_t r, std::size_t in, std::size_t out_dim) {
  double* dst = out + r * in;
  std::fill(dst, dst + in, 0.0);
  const double* g = dy + r * out_dim;
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double go = g[o];
    const double* wr = w + o * in;
    for (std::size_t k = 0; k < in; ++k) dst[k] += go * wr[k];
  }
}

inline void matmul_tn_row(double* dw, const double* dy, const double* x,
                          std::size_t o, std::size_t rows, std::size_t in,
                          std::size_t out_dim) {
  double* dst = dw + o * in;
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dy[r * out_dim + o];
    if (g == 0.0) continue;
    const double* xr = x + r * in;
    for (std::size_t k = 0; k < in; ++k) dst[k] += g * xr[k];
  }
}

// One (query, head) pair of masked attention.
inline void attention_cell(double* out, double* probs, const double* q,
                           const double* keys, const double* values,
                           const MaskMatrix& mask, std::size_t t,
                           std::size_t h, std::size_t n_heads,
                           std::size_t d_model, double* scores) {
  const std::size_t hd = d_model / n_heads;
  const std::size_t kn = mask.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto row = mask.row(t);
  const double* qh = q + t * d_model + h * hd;

  double max_score = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < kn; ++j) {
    if (!row[j]) continue;
    scores[j] = dot(qh, keys + j * d_model + h * hd, hd) * scale;
    max_score = std::max(max_score, scores[j]);
  }
  double denom = 0.0;
  for (std::size_t j = 0; j < kn; ++j) {
    if (!row[j]) continue;
    scores[j] = std::exp(scores[j] - max_score);
    denom += scores[j];
  }
  double* oh = out + t * d_model + h * hd;
  std::fill(oh, oh + hd, 0.0);
  double* ph = probs ? probs + (t * n_heads + h) * kn : nullptr;
  for (std::size_t j = 0; j < kn; ++j) {
    if (!row[j]) {
      if (ph) ph[j] = 0.0;
      continue;
    }
    const double p = scores[j] / denom;
    if (ph) ph[j] = p;
    const double* vj = values + j * d_model + h * hd;
    for (std::size_t k = 0; k < hd; ++k) oh[k] += p * vj[k];
  }
}

void check_attention_shapes(std::span<double> out, std::span<double> probs,
                            std::span<const double> q,
                            std::span<const double> keys,
                            std::span<const double> values,
                            const MaskMatrix& mask, std::size_t n_heads,
                            std::size_t d_model) {
  const std::size_t t = mask.rows();
  const std::size_t kn = mask.cols();
  ANCHORLM_EXPECT(n_heads > 0 && d_model % n_heads == 0,
                  "d_model must be divisible by n_heads");
  ANCHORLM_EXPECT(q.size() == t * d_model && out.size() == t * d_model,
                  "attention query/output shape mismatch");
  ANCHORLM_EXPECT(keys.size() == kn * d_model && values.size() == kn * d_model,
                  "attention mask width does not match key count");
  ANCHORLM_EXPECT(probs.empty() || probs.size() == t * n_heads * kn,
                  "attention probs buffer shape mismatch");
  for (std::size_t i = 0; i < t; ++i) {
    bool any = false;
    for (auto b : mask.row(i)) any = any || b;
    ANCHORLM_EXPECT(any, "attention mask row with no visible key");
  }
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void matmul_nt(std::span<double> out, std::span<const double> x,
               std::span<const double> w, std::size_t rows, std::size_t in,
               std::size_t out_dim) {
  const auto total = static_cast<std::ptrdiff_t>(rows * out_dim);
  const bool par = rows * out_dim * in >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const auto u = static_cast<std::size_t>(idx);
    matmul_nt_elem(out.data(), x.data(), w.data(), u / out_dim, u % out_dim,
                   in, out_dim);
  }
}

void matmul_nn(std::span<double> out, std::span<const double> dy,
               std::span<const double> w, std::size_t rows, std::size_t in,
               std::size_t out_dim) {
  const bool par = rows * out_dim * in >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r) {
    matmul_nn_row(out.data(), dy.data(), w.data(), static_cast<std::size_t>(r),
                  in, out_dim);
  }
}

void matmul_tn_acc(std::span<double> dw, std::span<const double> dy,
                   std::span<const double> x, std::size_t rows, std::size_t in,
                   std::size_t out_dim) {
  const bool par = rows * out_dim * in >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(out_dim); ++o) {
    matmul_tn_row(dw.data(), dy.data(), x.data(), static_cast<std::size_t>(o),
                  rows, in, out_dim);
  }
}

void masked_attention(std::span<double> out, std::span<double> probs,
                      std::span<const double> q, std::span<const double> keys,
                      std::span<const double> values, const MaskMatrix& mask,
                      std::size_t n_heads, std::size_t d_model) {
  check_attention_shapes(out, probs, q, keys, values, mask, n_heads, d_model);
  const std::size_t t = mask.rows();
  const std::size_t kn = mask.cols();
  const auto cells = static_cast<std::ptrdiff_t>(t * n_heads);
  const bool par = t * kn * d_model >= kParallelThreshold;
  double* probs_ptr = probs.empty() ? nullptr : probs.data();
#pragma omp parallel if (par)
  {
    std::vector<double> scores(kn);
#pragma omp for schedule(static)
    for (std::ptrdiff_t c = 0; c < cells; ++c) {
      const auto u = static_cast<std::size_t>(c);
      attention_cell(out.data(), probs_ptr, q.data(), keys.data(),
                     values.data(), mask, u / n_heads, u % n_heads, n_heads,
                     d_model, scores.data());
    }
  }
}

namespace serial {

void matmul_nt(std::span<double> out, std::span<const double> x,
               std::span<const double> w, std::size_t rows, std::size_t in,
               std::size_t out_dim) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      matmul_nt_elem(out.data(), x.data(), w.data(), r, o, in, out_dim);
    }
  }
}

void matmul_nn(std::span<double> out, std::span<const double> dy,
               std::span<const double> w, std::size_t rows, std::size_t in,
               std::size_t out_dim) {
  for (std::size_t r = 0; r < rows; ++r) {
    matmul_nn_row(out.data(), dy.data(), w.data(), r, in, out_dim);
  }
}

void matmul_tn_acc(std::span<double> dw, std::span<const double> dy,
                   std::span<const double> x, std::size_t rows, std::size_t in,
                   std::size_t out_dim) {
  for (std::size_t o = 0; o < out_dim; ++o) {
    matmul_tn_row(dw.data(), dy.data(), x.data(), o, rows, in, out_dim);
  }
}

void masked_attention(std::span<double> out, std::span<double> probs,
                      std::span<const double> q, std::span<const double> keys,
                      std::span<const double> values, const MaskMatrix& mask,
                      std::size_t n_heads, std::size_t d_model) {
  check_attention_shapes(out, probs, q, keys, values, mask, n_heads, d_model);
  std::vector<double> scores(mask.cols());
  double* probs_ptr = probs.empty() ? nullptr : probs.data();
  for (std::size_t t = 0; t < mask.rows(); ++t) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      attention_cell(out.data(), probs_ptr, q.data(), keys.data(),
                     values.data(), mask, t, h, n_heads, d_model,
                     scores.data());
    }
  }
}

}  // namespace serial

}  // namespace anchorlm::kernels
