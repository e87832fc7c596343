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

#include "anchorlm/model.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "anchorlm/error.hpp"
#include "anchorlm/kernels.hpp"
#include "anchorlm/util.hpp"

namespace anchorlm {

void ModelConfig::validate() const {
  if (vocab_size == 0 || n_layers == 0 || n_heads == 0 || d_model == 0 ||
      d_ff == 0 || context_len == 0) {
    throw ConfigError("model config sizes must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model must be divisible by n_heads");
  }
  if (head_dim() % 2 != 0) {
    throw ConfigError("head dimension must be even for rotary encoding");
  }
  if (!(rope_base > 0.0) || !(norm_eps > 0.0)) {
    throw ConfigError("rope_base and norm_eps must be positive");
  }
}

ParamLayout ParamLayout::make(const ModelConfig& c) {
  ParamLayout p;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    const std::size_t off = p.total;
    p.tensors.push_back({std::move(name), off, rows, cols});
    p.total += rows * cols;
    return off;
  };
  const std::size_t d = c.d_model;
  p.tok_emb = add("tok_emb", c.vocab_size, d);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    LayerLayout ll{};
    ll.attn_norm = add(pre + "attn_norm", 1, d);
    ll.wq = add(pre + "wq", d, d);
    ll.wk = add(pre + "wk", d, d);
    ll.wv = add(pre + "wv", d, d);
    ll.wo = add(pre + "wo", d, d);
    ll.ffn_norm = add(pre + "ffn_norm", 1, d);
    ll.w1 = add(pre + "w1", c.d_ff, d);
    ll.w2 = add(pre + "w2", d, c.d_ff);
    p.layers.push_back(ll);
  }
  p.final_norm = add("final_norm", 1, d);
  p.head = add("head", c.vocab_size, d);
  return p;
}

ModelWeights init_weights(const ModelConfig& config, std::uint64_t seed,
                          std::optional<TokenId> anchor_id) {
  config.validate();
  ModelWeights w;
  w.config = config;
  w.layout = ParamLayout::make(config);
  w.params.assign(w.layout.total, 0.0);
  Rng rng(seed);
  for (const auto& t : w.layout.tensors) {
    auto span = w.tensor(t.offset, t.size());
    if (t.rows == 1) {
      std::fill(span.begin(), span.end(), 1.0);  // norm gains
    } else {
      for (auto& x : span) x = 0.02 * rng.normal();
    }
  }
  if (anchor_id) {
    const std::size_t v = config.vocab_size;
    const std::size_t d = config.d_model;
    const auto a = static_cast<std::size_t>(*anchor_id);
    ANCHORLM_EXPECT(a < v, "anchor id outside vocab");
    if (v > 1) {
      auto emb = w.tensor(w.layout.tok_emb, v * d);
      std::vector<double> mean(d, 0.0);
      for (std::size_t r = 0; r < v; ++r) {
        if (r == a) continue;
        for (std::size_t k = 0; k < d; ++k) mean[k] += emb[r * d + k];
      }
      for (std::size_t k = 0; k < d; ++k) {
        emb[a * d + k] = mean[k] / static_cast<double>(v - 1);
      }
    }
  }
  return w;
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

// y = x * rsqrt(mean(x^2) + eps) * gain, row-wise. Stores the inverse rms.
void rmsnorm(std::span<double> y, std::span<double> inv_rms,
             std::span<const double> x, std::span<const double> gain,
             std::size_t rows, std::size_t d, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    double ss = 0.0;
    for (std::size_t k = 0; k < d; ++k) ss += xr[k] * xr[k];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
    if (!inv_rms.empty()) inv_rms[r] = inv;
    double* yr = y.data() + r * d;
    for (std::size_t k = 0; k < d; ++k) yr[k] = xr[k] * inv * gain[k];
  }
}

void rmsnorm_backward(std::span<double> dx, std::span<double> dgain,
                      std::span<const double> dy, std::span<const double> x,
                      std::span<const double> inv_rms,
                      std::span<const double> gain, std::size_t rows,
                      std::size_t d) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    const double* gr = dy.data() + r * d;
    const double inv = inv_rms[r];
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      dgain[k] += gr[k] * xr[k] * inv;
      dot += gr[k] * gain[k] * xr[k];
    }
    const double coef = inv * inv * inv * dot / static_cast<double>(d);
    double* dxr = dx.data() + r * d;
    for (std::size_t k = 0; k < d; ++k) {
      dxr[k] += inv * gain[k] * gr[k] - coef * xr[k];
    }
  }
}

// Rotates each (2i, 2i+1) pair within every head by pos * base^(-2i/hd).
// `sign` = -1 applies the inverse rotation (used by the backward pass).
void rope(std::span<double> x, std::span<const std::int64_t> positions,
          std::size_t n_heads, std::size_t d, double base, double sign = 1.0) {
  const std::size_t hd = d / n_heads;
  for (std::size_t t = 0; t < positions.size(); ++t) {
    const double pos = static_cast<double>(positions[t]);
    for (std::size_t i = 0; i < hd / 2; ++i) {
      const double freq =
          std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
      const double angle = pos * freq;
      const double c = std::cos(angle);
      const double s = sign * std::sin(angle);
      for (std::size_t h = 0; h < n_heads; ++h) {
        double* p = x.data() + t * d + h * hd + 2 * i;
        const double a = p[0];
        const double b = p[1];
        p[0] = a * c - b * s;
        p[1] = a * s + b * c;
      }
    }
  }
}

// Activations kept for the backward pass (training only, no past cache).
struct LayerTape {
  std::vector<double> x_in, inv1, xn1, q, k, v, probs, att;
  std::vector<double> x_mid, inv2, xn2, hpre, act;
};

struct Tape {
  std::vector<LayerTape> layers;
  std::vector<double> x_final, inv_final, xf;
};

void check_finite(std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value in ") + what);
    }
  }
}

ForwardOutput forward_impl(const ModelWeights& w, std::span<const TokenId> ids,
                           std::span<const std::int64_t> positions,
                           const MaskMatrix& mask, const PastKV& past,
                           Tape* tape) {
  const ModelConfig& c = w.config;
  const std::size_t t = ids.size();
  const std::size_t d = c.d_model;
  const std::size_t v = c.vocab_size;
  const std::size_t kn = past.count + t;

  ANCHORLM_EXPECT(positions.size() == t, "positions length must equal token count");
  ANCHORLM_EXPECT(mask.rows() == t && mask.cols() == kn,
                  "mask shape must be T x (cached + T)");
  ANCHORLM_EXPECT(past.count == 0 || (past.keys.size() == c.n_layers &&
                                      past.values.size() == c.n_layers),
                  "past cache must provide every layer");
  for (std::size_t i = 1; i < t; ++i) {
    ANCHORLM_EXPECT(positions[i] > positions[i - 1],
                    "positions must be strictly increasing");
  }
  for (TokenId id : ids) {
    ANCHORLM_EXPECT(id >= 0 && static_cast<std::size_t>(id) < v,
                    "token id outside vocab");
  }

  ForwardOutput out;
  out.rows = t;
  out.vocab = v;
  out.new_kv.resize(c.n_layers);

  std::vector<double> x(t * d);
  const auto emb = w.tensor(w.layout.tok_emb, v * d);
  for (std::size_t i = 0; i < t; ++i) {
    std::copy_n(emb.data() + static_cast<std::size_t>(ids[i]) * d, d,
                x.data() + i * d);
  }

  std::vector<double> xn(t * d), q(t * d), att(t * d), proj(t * d);
  std::vector<double> hpre(t * c.d_ff), act(t * c.d_ff), inv(t);
  std::vector<double> keys_all(kn * d), values_all(kn * d);
  std::vector<double> probs;

  if (tape) tape->layers.resize(c.n_layers);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const LayerLayout& ll = w.layout.layers[l];
    LayerKV& kv = out.new_kv[l];
    kv.keys.assign(t * d, 0.0);
    kv.values.assign(t * d, 0.0);
    LayerTape* lt = tape ? &tape->layers[l] : nullptr;
    if (lt) lt->x_in = x;

    rmsnorm(xn, inv, x, w.tensor(ll.attn_norm, d), t, d, c.norm_eps);
    kernels::matmul_nt(q, xn, w.tensor(ll.wq, d * d), t, d, d);
    kernels::matmul_nt(kv.keys, xn, w.tensor(ll.wk, d * d), t, d, d);
    kernels::matmul_nt(kv.values, xn, w.tensor(ll.wv, d * d), t, d, d);
    rope(q, positions, c.n_heads, d, c.rope_base);
    rope(kv.keys, positions, c.n_heads, d, c.rope_base);

    if (past.count > 0) {
      std::copy_n(past.keys[l].data(), past.count * d, keys_all.data());
      std::copy_n(past.values[l].data(), past.count * d, values_all.data());
    }
    std::copy(kv.keys.begin(), kv.keys.end(), keys_all.begin() + past.count * d);
    std::copy(kv.values.begin(), kv.values.end(),
              values_all.begin() + past.count * d);

    if (lt) probs.assign(t * c.n_heads * kn, 0.0);
    kernels::masked_attention(att, lt ? std::span<double>(probs) : std::span<double>{},
                              q, keys_all, values_all, mask, c.n_heads, d);
    kernels::matmul_nt(proj, att, w.tensor(ll.wo, d * d), t, d, d);
    if (lt) {
      lt->inv1 = inv;
      lt->xn1 = xn;
      lt->q = q;
      lt->k = kv.keys;
      lt->v = kv.values;
      lt->probs = std::move(probs);
      lt->att = att;
    }
    for (std::size_t i = 0; i < t * d; ++i) x[i] += proj[i];
    if (lt) lt->x_mid = x;

    rmsnorm(xn, inv, x, w.tensor(ll.ffn_norm, d), t, d, c.norm_eps);
    kernels::matmul_nt(hpre, xn, w.tensor(ll.w1, c.d_ff * d), t, d, c.d_ff);
    for (std::size_t i = 0; i < hpre.size(); ++i) act[i] = gelu(hpre[i]);
    kernels::matmul_nt(proj, act, w.tensor(ll.w2, d * c.d_ff), t, c.d_ff, d);
    if (lt) {
      lt->inv2 = inv;
      lt->xn2 = xn;
      lt->hpre = hpre;
      lt->act = act;
    }
    for (std::size_t i = 0; i < t * d; ++i) x[i] += proj[i];
  }

  if (tape) tape->x_final = x;
  rmsnorm(xn, inv, x, w.tensor(w.layout.final_norm, d), t, d, c.norm_eps);
  if (tape) {
    tape->inv_final = inv;
    tape->xf = xn;
  }
  out.logits.assign(t * v, 0.0);
  kernels::matmul_nt(out.logits, xn, w.tensor(w.layout.head, v * d), t, d, v);
  check_finite(out.logits, "logits");
  return out;
}

// Gradient of masked attention for one layer, heads processed in parallel.
// Each head touches a disjoint slice of dq/dk/dv.
void attention_backward(std::span<double> dq, std::span<double> dk,
                        std::span<double> dv, std::span<const double> datt,
                        std::span<const double> q, std::span<const double> k,
                        std::span<const double> v,
                        std::span<const double> probs, std::size_t t,
                        std::size_t n_heads, std::size_t d) {
  const std::size_t hd = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
#pragma omp parallel for schedule(static) if (t * t * d >= (1 << 15))
  for (std::ptrdiff_t hs = 0; hs < static_cast<std::ptrdiff_t>(n_heads); ++hs) {
    const auto h = static_cast<std::size_t>(hs);
    std::vector<double> dp(t);
    for (std::size_t i = 0; i < t; ++i) {
      const double* p = probs.data() + (i * n_heads + h) * t;
      const double* g = datt.data() + i * d + h * hd;
      double sum = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        if (p[j] == 0.0) {
          dp[j] = 0.0;
          continue;
        }
        const double* vj = v.data() + j * d + h * hd;
        double acc = 0.0;
        for (std::size_t m = 0; m < hd; ++m) acc += g[m] * vj[m];
        dp[j] = acc;
        sum += p[j] * acc;
        double* dvj = dv.data() + j * d + h * hd;
        for (std::size_t m = 0; m < hd; ++m) dvj[m] += p[j] * g[m];
      }
      const double* qi = q.data() + i * d + h * hd;
      double* dqi = dq.data() + i * d + h * hd;
      for (std::size_t j = 0; j <= i; ++j) {
        if (p[j] == 0.0) continue;
        const double ds = p[j] * (dp[j] - sum) * scale;
        const double* kj = k.data() + j * d + h * hd;
        double* dkj = dk.data() + j * d + h * hd;
        for (std::size_t m = 0; m < hd; ++m) {
          dqi[m] += ds * kj[m];
          dkj[m] += ds * qi[m];
        }
      }
    }
  }
}

}  // namespace

ForwardOutput forward(const ModelWeights& weights, std::span<const TokenId> ids,
                      std::span<const std::int64_t> positions,
                      const MaskMatrix& mask, const PastKV& past) {
  return forward_impl(weights, ids, positions, mask, past, nullptr);
}

double log_prob(std::span<const double> logits, TokenId target) {
  double m = -std::numeric_limits<double>::infinity();
  for (double z : logits) m = std::max(m, z);
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return logits[static_cast<std::size_t>(target)] - m - std::log(s);
}

double loss_only(const ModelWeights& weights, std::span<const TokenId> ids,
                 const MaskMatrix& mask) {
  ANCHORLM_EXPECT(ids.size() >= 2, "loss needs at least two tokens");
  std::vector<std::int64_t> pos(ids.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<std::int64_t>(i);
  const auto out = forward(weights, ids, pos, mask);
  double loss = 0.0;
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
    loss -= log_prob(out.row(i), ids[i + 1]);
  }
  return loss / static_cast<double>(ids.size() - 1);
}

LossAndGrads loss_and_grads(const ModelWeights& w, const SegmentedText& block,
                            const MaskMatrix& mask) {
  ANCHORLM_EXPECT(block.size() >= 2, "training block must hold >= 2 tokens");
  ANCHORLM_EXPECT(mask.rows() == block.size() && mask.cols() == block.size(),
                  "training mask must be L x L");
  const ModelConfig& c = w.config;
  const std::size_t t = block.size();
  const std::size_t d = c.d_model;
  const std::size_t v = c.vocab_size;
  const std::size_t ff = c.d_ff;

  std::vector<std::int64_t> pos(t);
  for (std::size_t i = 0; i < t; ++i) pos[i] = static_cast<std::int64_t>(i);
  Tape tape;
  const auto out = forward_impl(w, block.ids, pos, mask, {}, &tape);

  LossAndGrads res;
  res.grads.assign(w.params.size(), 0.0);
  auto grad = [&](std::size_t off, std::size_t n) {
    return std::span<double>(res.grads.data() + off, n);
  };

  // d(loss)/d(logits): (softmax - onehot) / N on rows 0..t-2.
  const double n_targets = static_cast<double>(t - 1);
  std::vector<double> dlogits(t * v, 0.0);
  for (std::size_t i = 0; i + 1 < t; ++i) {
    const auto row = out.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double z : row) s += std::exp(z - m);
    const auto target = static_cast<std::size_t>(block.ids[i + 1]);
    res.loss -= row[target] - m - std::log(s);
    double* g = dlogits.data() + i * v;
    for (std::size_t k = 0; k < v; ++k) g[k] = std::exp(row[k] - m) / s / n_targets;
    g[target] -= 1.0 / n_targets;
  }
  res.loss /= n_targets;

  std::vector<double> dxf(t * d), dx(t * d, 0.0);
  kernels::matmul_tn_acc(grad(w.layout.head, v * d), dlogits, tape.xf, t, d, v);
  kernels::matmul_nn(dxf, dlogits, w.tensor(w.layout.head, v * d), t, d, v);
  rmsnorm_backward(dx, grad(w.layout.final_norm, d), dxf, tape.x_final,
                   tape.inv_final, w.tensor(w.layout.final_norm, d), t, d);

  std::vector<double> dact(t * ff), dh(t * ff), dxn(t * d), tmp(t * d);
  std::vector<double> datt(t * d), dq(t * d), dk(t * d), dv(t * d);
  for (std::size_t li = c.n_layers; li-- > 0;) {
    const LayerLayout& ll = w.layout.layers[li];
    const LayerTape& lt = tape.layers[li];

    // Feed-forward branch; dx is the gradient w.r.t. the layer output.
    kernels::matmul_tn_acc(grad(ll.w2, d * ff), dx, lt.act, t, ff, d);
    kernels::matmul_nn(dact, dx, w.tensor(ll.w2, d * ff), t, ff, d);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] = dact[i] * gelu_grad(lt.hpre[i]);
    kernels::matmul_tn_acc(grad(ll.w1, ff * d), dh, lt.xn2, t, d, ff);
    kernels::matmul_nn(dxn, dh, w.tensor(ll.w1, ff * d), t, d, ff);
    rmsnorm_backward(dx, grad(ll.ffn_norm, d), dxn, lt.x_mid, lt.inv2,
                     w.tensor(ll.ffn_norm, d), t, d);

    // Attention branch.
    kernels::matmul_tn_acc(grad(ll.wo, d * d), dx, lt.att, t, d, d);
    kernels::matmul_nn(datt, dx, w.tensor(ll.wo, d * d), t, d, d);
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    attention_backward(dq, dk, dv, datt, lt.q, lt.k, lt.v, lt.probs, t,
                       c.n_heads, d);
    rope(dq, pos, c.n_heads, d, c.rope_base, -1.0);
    rope(dk, pos, c.n_heads, d, c.rope_base, -1.0);

    kernels::matmul_tn_acc(grad(ll.wq, d * d), dq, lt.xn1, t, d, d);
    kernels::matmul_tn_acc(grad(ll.wk, d * d), dk, lt.xn1, t, d, d);
    kernels::matmul_tn_acc(grad(ll.wv, d * d), dv, lt.xn1, t, d, d);
    kernels::matmul_nn(dxn, dq, w.tensor(ll.wq, d * d), t, d, d);
    kernels::matmul_nn(tmp, dk, w.tensor(ll.wk, d * d), t, d, d);
    for (std::size_t i = 0; i < dxn.size(); ++i) dxn[i] += tmp[i];
    kernels::matmul_nn(tmp, dv, w.tensor(ll.wv, d * d), t, d, d);
    for (std::size_t i = 0; i < dxn.size(); ++i) dxn[i] += tmp[i];
    rmsnorm_backward(dx, grad(ll.attn_norm, d), dxn, lt.x_in, lt.inv1,
                     w.tensor(ll.attn_norm, d), t, d);
  }

  auto demb = grad(w.layout.tok_emb, v * d);
  for (std::size_t i = 0; i < t; ++i) {
    const auto id = static_cast<std::size_t>(block.ids[i]);
    for (std::size_t k = 0; k < d; ++k) demb[id * d + k] += dx[i * d + k];
  }
  if (!std::isfinite(res.loss)) throw NumericError("non-finite training loss");
  return res;
}

}  // namespace anchorlm
