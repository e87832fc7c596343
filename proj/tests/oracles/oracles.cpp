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

#include "oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace oracles {

namespace {

struct Offsets {
  int emb;
  std::vector<int> attn_norm, wq, wk, wv, wo, ffn_norm, w1, w2;
  int final_norm;
  int head;
  int total;
};

Offsets offsets(const TinyDims& m) {
  Offsets o{};
  int at = 0;
  o.emb = at;
  at += m.vocab * m.d;
  for (int l = 0; l < m.layers; ++l) {
    o.attn_norm.push_back(at); at += m.d;
    o.wq.push_back(at); at += m.d * m.d;
    o.wk.push_back(at); at += m.d * m.d;
    o.wv.push_back(at); at += m.d * m.d;
    o.wo.push_back(at); at += m.d * m.d;
    o.ffn_norm.push_back(at); at += m.d;
    o.w1.push_back(at); at += m.dff * m.d;
    o.w2.push_back(at); at += m.d * m.dff;
  }
  o.final_norm = at; at += m.d;
  o.head = at; at += m.vocab * m.d;
  o.total = at;
  return o;
}

using Mat = std::vector<std::vector<double>>;

Mat rmsnorm(const Mat& x, const std::vector<double>& p, int g, double eps) {
  Mat y = x;
  for (std::size_t t = 0; t < x.size(); ++t) {
    double ss = 0;
    for (double v : x[t]) ss += v * v;
    const double r = std::sqrt(ss / x[t].size() + eps);
    for (std::size_t k = 0; k < x[t].size(); ++k) y[t][k] = x[t][k] / r * p[g + k];
  }
  return y;
}

// y[t][o] = sum_k W[o][k] x[t][k], W stored [out][in] at offset w.
Mat linear(const Mat& x, const std::vector<double>& p, int w, int out, int in) {
  Mat y(x.size(), std::vector<double>(out, 0.0));
  for (std::size_t t = 0; t < x.size(); ++t)
    for (int o = 0; o < out; ++o)
      for (int k = 0; k < in; ++k) y[t][o] += p[w + o * in + k] * x[t][k];
  return y;
}

void rotate(Mat& x, const std::vector<long long>& pos, int heads, double base) {
  const int d = static_cast<int>(x[0].size());
  const int hd = d / heads;
  for (std::size_t t = 0; t < x.size(); ++t)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < hd / 2; ++i) {
        const double theta = static_cast<double>(pos[t]) / std::pow(base, 2.0 * i / hd);
        const double a = x[t][h * hd + 2 * i];
        const double b = x[t][h * hd + 2 * i + 1];
        x[t][h * hd + 2 * i] = a * std::cos(theta) - b * std::sin(theta);
        x[t][h * hd + 2 * i + 1] = a * std::sin(theta) + b * std::cos(theta);
      }
}

}  // namespace

OracleResult naive_attention(const TinyDims& m, const std::vector<double>& p,
                             const std::vector<int>& ids, const BitMatrix& mask,
                             const std::vector<long long>& positions) {
  const Offsets o = offsets(m);
  const int n = static_cast<int>(ids.size());
  if (static_cast<int>(p.size()) != o.total) throw std::invalid_argument("params");
  if (static_cast<int>(mask.size()) != n || static_cast<int>(positions.size()) != n)
    throw std::invalid_argument("shape");
  for (const auto& row : mask)
    if (static_cast<int>(row.size()) != n) throw std::invalid_argument("mask");

  Mat x(n, std::vector<double>(m.d));
  for (int t = 0; t < n; ++t)
    for (int k = 0; k < m.d; ++k) x[t][k] = p[o.emb + ids[t] * m.d + k];

  const int hd = m.d / m.heads;
  for (int l = 0; l < m.layers; ++l) {
    const Mat xn = rmsnorm(x, p, o.attn_norm[l], m.eps);
    Mat q = linear(xn, p, o.wq[l], m.d, m.d);
    Mat k = linear(xn, p, o.wk[l], m.d, m.d);
    const Mat v = linear(xn, p, o.wv[l], m.d, m.d);
    rotate(q, positions, m.heads, m.rope_base);
    rotate(k, positions, m.heads, m.rope_base);

    Mat att(n, std::vector<double>(m.d, 0.0));
    for (int h = 0; h < m.heads; ++h) {
      for (int i = 0; i < n; ++i) {
        std::vector<double> s(n, 0.0);
        double top = -1e300;
        for (int j = 0; j < n; ++j) {
          if (!mask[i][j]) continue;
          for (int c = 0; c < hd; ++c) s[j] += q[i][h * hd + c] * k[j][h * hd + c];
          s[j] /= std::sqrt(static_cast<double>(hd));
          if (s[j] > top) top = s[j];
        }
        double z = 0.0;
        for (int j = 0; j < n; ++j)
          if (mask[i][j]) z += std::exp(s[j] - top);
        for (int j = 0; j < n; ++j) {
          if (!mask[i][j]) continue;
          const double a = std::exp(s[j] - top) / z;
          for (int c = 0; c < hd; ++c) att[i][h * hd + c] += a * v[j][h * hd + c];
        }
      }
    }
    const Mat proj = linear(att, p, o.wo[l], m.d, m.d);
    for (int t = 0; t < n; ++t)
      for (int c = 0; c < m.d; ++c) x[t][c] += proj[t][c];

    const Mat xn2 = rmsnorm(x, p, o.ffn_norm[l], m.eps);
    Mat hidden = linear(xn2, p, o.w1[l], m.dff, m.d);
    for (auto& row : hidden)
      for (double& u : row) {
        const double c = std::sqrt(2.0 / 3.14159265358979323846);
        u = 0.5 * u * (1.0 + std::tanh(c * (u + 0.044715 * u * u * u)));
      }
    const Mat down = linear(hidden, p, o.w2[l], m.d, m.dff);
    for (int t = 0; t < n; ++t)
      for (int c = 0; c < m.d; ++c) x[t][c] += down[t][c];
  }
  const Mat xf = rmsnorm(x, p, o.final_norm, m.eps);
  const Mat logits = linear(xf, p, o.head, m.vocab, m.d);

  OracleResult r;
  r.description = "explicit-loop transformer forward";
  for (const auto& row : logits) r.values.insert(r.values.end(), row.begin(), row.end());
  return r;
}

OracleResult naive_anchor_mask(const std::vector<int>& is_anchor,
                               const std::vector<int>& seqs) {
  const int n = static_cast<int>(is_anchor.size());
  OracleResult r;
  r.description = "anchor mask, four cases";
  r.bits.assign(n, std::vector<int>(n, 0));
  for (int i = 0; i < n; ++i) {
    const int k = seqs[i];
    for (int j = 0; j < n; ++j) {
      const bool earlier_sequence = seqs[j] <= k - 1;
      const bool pair_outside_anchors = !is_anchor[i] && !is_anchor[j];
      int bit;
      if (pair_outside_anchors && earlier_sequence) {
        bit = 0;
      } else if (is_anchor[i] && earlier_sequence) {
        bit = 0;
      } else if (i >= j) {
        bit = 1;
      } else {
        bit = 0;
      }
      r.bits[i][j] = bit;
    }
  }
  return r;
}

std::vector<int> naive_reduction(const std::vector<int>& is_anchor,
                                 const std::vector<long long>& positions,
                                 long long protected_upto) {
  const int n = static_cast<int>(is_anchor.size());
  long long j = -1;
  for (int c = 0; c < n; ++c)
    if (is_anchor[c] && positions[c] >= protected_upto) j = positions[c];
  std::vector<int> kept;
  for (int c = 0; c < n; ++c) {
    if (j < 0 || positions[c] >= j || is_anchor[c] || positions[c] < protected_upto)
      kept.push_back(c);
  }
  return kept;
}

}  // namespace oracles
