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

#include "anchorlm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "anchorlm/cache.hpp"
#include "anchorlm/error.hpp"
#include "anchorlm/infer.hpp"
#include "anchorlm/util.hpp"

namespace anchorlm {

namespace {

using Clock = std::chrono::steady_clock;
using ordered_json = nlohmann::ordered_json;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Copy of text[begin, end) keeping absolute sequence indices.
SegmentedText tail_from(const SegmentedText& text, std::size_t begin) {
  SegmentedText out;
  for (std::size_t i = begin; i < text.size(); ++i) {
    out.push_back(text.ids[i], text.is_anchor[i] != 0, text.seq_index[i]);
  }
  return out;
}

std::vector<std::int64_t> iota_positions(std::size_t start, std::size_t n) {
  std::vector<std::int64_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<std::int64_t>(start + i);
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// MetricsReport

void MetricsReport::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (accuracy && !in_unit(*accuracy)) {
    throw InternalError("accuracy outside [0, 1]");
  }
  if (!in_unit(cache_reduction)) {
    throw InternalError("cache reduction outside [0, 1]");
  }
  if (perplexity && !(*perplexity >= 1.0 && std::isfinite(*perplexity))) {
    throw InternalError("perplexity must be finite and >= 1");
  }
  if (acceleration_ratio && !(*acceleration_ratio > 0.0)) {
    throw InternalError("acceleration ratio must be > 0");
  }
}

std::string MetricsReport::to_text(bool include_wall) const {
  validate();
  ordered_json j;
  j["task"] = task;
  j["accuracy"] = accuracy ? ordered_json(*accuracy) : ordered_json(nullptr);
  j["perplexity"] = perplexity ? ordered_json(*perplexity) : ordered_json(nullptr);
  j["cache_reduction"] = cache_reduction;
  j["acceleration_ratio"] =
      acceleration_ratio ? ordered_json(*acceleration_ratio) : ordered_json(nullptr);
  if (acceleration_vs_full_cache) {
    j["acceleration_vs_full_cache"] = *acceleration_vs_full_cache;
  }
  j["peak_cache"] = peak_cache;
  j["items"] = items;
  j["skipped"] = skipped;
  j["scored_tokens"] = scored_tokens;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  if (include_wall) {
    ordered_json wall = ordered_json::object();
    for (const auto& [k, v] : wall_ms) wall[k] = v;
    j["wall_ms"] = wall;
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Perplexity

PerplexityResult perplexity(const ModelWeights& weights,
                            std::span<const SegmentedText> texts, MaskMode mode,
                            std::size_t eval_context_len,
                            std::optional<TokenId> excluded_id) {
  ANCHORLM_EXPECT(eval_context_len >= 2, "eval context must hold >= 2 tokens");
  ANCHORLM_EXPECT(eval_context_len <= weights.config.context_len,
                  "eval context exceeds the model context");
  std::size_t total_tokens = 0;
  double nll = 0.0;
  std::size_t scored = 0;
  for (const auto& text : texts) {
    validate(text);
    total_tokens += text.size();
    for (std::size_t start = 0; start < text.size(); start += eval_context_len) {
      const auto window = text.slice(start, start + eval_context_len);
      if (window.size() < 2) continue;
      const auto pos = iota_positions(0, window.size());
      const auto out =
          forward(weights, window.ids, pos, training_mask(window, mode));
      for (std::size_t i = 1; i < window.size(); ++i) {
        if (excluded_id && window.ids[i] == *excluded_id) continue;
        nll -= log_prob(out.row(i - 1), window.ids[i]);
        ++scored;
      }
    }
  }
  if (total_tokens == 0) throw UndefinedMetricError("perplexity of empty text");
  if (scored == 0) {
    throw UndefinedMetricError("perplexity: no scorable next-token targets");
  }
  PerplexityResult r;
  r.scored = scored;
  r.mean_nll = nll / static_cast<double>(scored);
  r.perplexity = std::exp(r.mean_nll);
  return r;
}

PerplexityResult perplexity(const ModelWeights& weights,
                            const SegmentedText& text, MaskMode mode,
                            std::size_t eval_context_len,
                            std::optional<TokenId> excluded_id) {
  return perplexity(weights, std::span<const SegmentedText>(&text, 1), mode,
                    eval_context_len, excluded_id);
}

// ---------------------------------------------------------------------------
// Multiple-choice items

std::vector<McItem> parse_mc_items(std::string_view jsonl) {
  std::vector<McItem> items;
  std::size_t line_no = 0;
  std::istringstream in{std::string(jsonl)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = " (line " + std::to_string(line_no) + ")";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("bad multiple-choice record: ") + e.what() + where);
    }
    if (!j.is_object() || !j.contains("context") || !j.contains("choices") ||
        !j.contains("gold") || !j["context"].is_string() ||
        !j["choices"].is_array() || !j["gold"].is_number_integer()) {
      throw InputError("multiple-choice record needs context, choices, gold" + where);
    }
    McItem item;
    item.context = j["context"].get<std::string>();
    for (const auto& c : j["choices"]) {
      if (!c.is_string()) throw InputError("choices must be strings" + where);
      item.choices.push_back(c.get<std::string>());
    }
    const auto gold = j["gold"].get<long long>();
    if (item.choices.empty() || gold < 0 ||
        static_cast<std::size_t>(gold) >= item.choices.size()) {
      throw InputError("gold index outside choices" + where);
    }
    item.gold = static_cast<std::size_t>(gold);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<McItem> load_mc_items(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read task file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_mc_items(ss.str());
}

std::string serialize_mc_items(std::span<const McItem> items) {
  std::string out;
  for (const auto& it : items) {
    ordered_json j;
    j["context"] = it.context;
    j["choices"] = it.choices;
    j["gold"] = it.gold;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<McItem> draw_demonstrations(std::span<const McItem> pool,
                                        std::size_t shots, std::uint64_t seed) {
  if (shots > pool.size()) {
    throw ConfigError("requested " + std::to_string(shots) +
                      " shots from a pool of " + std::to_string(pool.size()));
  }
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0xde30));
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i)]);
  }
  std::vector<McItem> out;
  for (std::size_t i = 0; i < shots; ++i) out.push_back(pool[idx[i]]);
  return out;
}

SegmentedText build_demonstrations(std::span<const McItem> demos,
                                   const Vocab& vocab,
                                   const AnchorPolicy& policy) {
  SegmentedText out;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const auto& d = demos[i];
    const std::string text = d.context + " " + d.choices[d.gold];
    SegmentedText seg;
    if (policy.mode == AnchorPolicy::Mode::kAnchor) {
      const auto anchor = vocab.anchor_id();
      if (!anchor) throw ConfigError("<AC> demonstrations need an <AC> vocab");
      for (TokenId id : vocab.encode(text)) seg.push_back(id, false, 0);
      seg.push_back(*anchor, true, 0);
    } else {
      seg = annotate(text, vocab, policy.with_seed(mix_seed(policy.seed, i)));
      const bool closed = !seg.empty() && seg.is_anchor.back() != 0;
      if (policy.mode == AnchorPolicy::Mode::kEndpoint && !closed) {
        const auto endpoint = vocab.endpoint_id();
        if (!endpoint) throw ConfigError("EP demonstrations need '.' in the vocab");
        seg.push_back(*endpoint, true, seg.next_seq_index());
      }
    }
    out.append(seg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multiple-choice evaluation

namespace {

struct Prepared {
  SegmentedText full;  // demonstrations + query + choice
  std::size_t choice_len = 0;
};

struct PassResult {
  std::vector<std::vector<double>> scores;  // [item][choice]
  CacheStats totals;
  std::size_t peak = 0;
  std::size_t scored_tokens = 0;
};

SegmentedText query_text(const std::string& context, const Vocab& vocab,
                         const AnchorPolicy& policy) {
  if (policy.mode == AnchorPolicy::Mode::kEndpoint) {
    return annotate(context, vocab, policy);
  }
  SegmentedText q;
  for (TokenId id : vocab.encode(context)) q.push_back(id, false, 0);
  return q;
}

void accumulate(PassResult& r, const AnchorKVCache& cache) {
  r.totals.total_appends += cache.stats().total_appends;
  r.totals.total_discards += cache.stats().total_discards;
  r.peak = std::max(r.peak, cache.stats().peak_live_count);
}

class McRunner {
 public:
  McRunner(const ModelWeights& w, const SegmentedText& demos,
           const std::vector<std::vector<Prepared>>& prepared)
      : w_(w), demos_(demos), prepared_(prepared) {}

  // Every prompt is recomputed from scratch for every choice.
  PassResult uncached(bool use_ansan, bool collect) const {
    PassResult r;
    for (const auto& choices : prepared_) {
      auto& row = r.scores.emplace_back();
      for (const auto& p : choices) {
        const std::size_t t = p.full.size();
        const auto pos = iota_positions(0, t);
        const auto mask = use_ansan ? anchor_mask(p.full) : causal_mask(t);
        const auto out = forward(w_, p.full.ids, pos, mask);
        row.push_back(sum_tail(out, p.full, p.choice_len, 0));
        r.scored_tokens += p.choice_len;
        if (collect) {
          AnchorKVCache cache(w_.config.n_layers, w_.config.d_model);
          cache.append_block(pos, token_flags(p.full), out.new_kv);
          if (use_ansan) cache.reduce();
          accumulate(r, cache);
        }
      }
    }
    return r;
  }

  // Demonstrations are processed once (and reduced when `reduce`), then
  // every query + choice runs against the shared cache.
  PassResult cached(bool use_ansan, bool reduce, bool collect) const {
    PassResult r;
    const std::size_t d = demos_.size();
    AnchorKVCache demo_cache(w_.config.n_layers, w_.config.d_model);
    if (d > 0) {
      const auto pos = iota_positions(0, d);
      const auto mask = use_ansan ? anchor_mask(demos_) : causal_mask(d);
      const auto out = forward(w_, demos_.ids, pos, mask);
      demo_cache.append_block(pos, token_flags(demos_), out.new_kv);
      if (reduce) demo_cache.reduce();
    }
    const auto live = live_flags(demo_cache);
    const PastKV past = demo_cache.past();
    for (const auto& choices : prepared_) {
      auto& row = r.scores.emplace_back();
      for (const auto& p : choices) {
        const auto tail = tail_from(p.full, d);
        const auto fresh = token_flags(tail);
        const auto pos = iota_positions(d, tail.size());
        const auto mask = extend_mask(fresh, live, !use_ansan);
        const auto out = forward(w_, tail.ids, pos, mask, past);
        row.push_back(sum_tail(out, tail, p.choice_len, 0));
        r.scored_tokens += p.choice_len;
        if (collect) {
          AnchorKVCache local = demo_cache;
          local.append_block(pos, fresh, out.new_kv);
          if (reduce) local.reduce();
          accumulate(r, local);
        }
      }
    }
    return r;
  }

 private:
  static double sum_tail(const ForwardOutput& out, const SegmentedText& text,
                         std::size_t n, std::size_t /*unused*/) {
    double s = 0.0;
    for (std::size_t i = text.size() - n; i < text.size(); ++i) {
      s += log_prob(out.row(i - 1), text.ids[i]);
    }
    return s;
  }

  const ModelWeights& w_;
  const SegmentedText& demos_;
  const std::vector<std::vector<Prepared>>& prepared_;
};

template <typename F>
double min_time_ms(std::size_t repeats, F&& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < std::max<std::size_t>(repeats, 1); ++i) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, ms_since(t0));
  }
  return best;
}

}  // namespace

McOutcome run_mc_task(const ModelWeights& weights, const Vocab& vocab,
                      std::span<const McItem> items,
                      std::span<const McItem> demo_pool,
                      const McTaskConfig& cfg) {
  if (items.empty()) throw ContractError("multiple-choice task has no items");
  const auto demos = draw_demonstrations(demo_pool, cfg.shots, cfg.seed);
  const SegmentedText demo_text = build_demonstrations(demos, vocab, cfg.policy);
  const std::size_t ctx = weights.config.context_len;

  McOutcome res;
  MetricsReport& rep = res.report;
  rep.task = "mc";
  rep.items = items.size();
  rep.config["policy"] = cfg.policy.to_string();
  rep.config["mask_mode"] = cfg.use_ansan ? "ansan" : "causal";
  rep.config["shots"] = std::to_string(cfg.shots);
  rep.config["reuse_demo_cache"] = cfg.reuse_demo_cache ? "true" : "false";
  rep.config["seed"] = std::to_string(cfg.seed);
  rep.config["demo_tokens"] = std::to_string(demo_text.size());

  // Items whose longest prompt overflows the context are skipped whole.
  std::vector<std::vector<Prepared>> prepared;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < items.size(); ++i) {
    res.item_order.push_back(i);
    std::vector<Prepared> choices;
    bool fits = true;
    for (const auto& choice : items[i].choices) {
      Prepared p;
      p.full = demo_text;
      p.full.append(query_text(items[i].context, vocab, cfg.policy));
      const std::int32_t seq = p.full.next_seq_index();
      const auto ids = vocab.encode(choice);
      for (TokenId id : ids) p.full.push_back(id, false, seq);
      p.choice_len = ids.size();
      if (p.full.size() > ctx || p.choice_len == 0 ||
          p.full.size() == p.choice_len) {
        fits = false;
        break;
      }
      choices.push_back(std::move(p));
    }
    if (!fits) {
      ++rep.skipped;
      continue;
    }
    kept.push_back(i);
    prepared.push_back(std::move(choices));
  }

  McRunner runner(weights, demo_text, prepared);
  const bool use_cache = cfg.reuse_demo_cache;
  const auto t0 = Clock::now();
  const PassResult pass = use_cache
                              ? runner.cached(cfg.use_ansan, cfg.use_ansan, true)
                              : runner.uncached(cfg.use_ansan, true);
  rep.wall_ms["eval"] = ms_since(t0);

  res.predictions.assign(items.size(), SIZE_MAX);
  res.scores.assign(items.size(), {});
  std::size_t correct = 0;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const std::size_t i = kept[k];
    res.scores[i] = pass.scores[k];
    res.predictions[i] = argmax_choice(pass.scores[k]);
    if (res.predictions[i] == items[i].gold) ++correct;
  }
  if (!kept.empty()) {
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(kept.size());
  }
  rep.cache_reduction =
      pass.totals.total_appends ? cache_reduction_metric(pass.totals) : 0.0;
  rep.peak_cache = pass.peak;
  rep.scored_tokens = pass.scored_tokens;

  if (cfg.measure_speed && cfg.use_ansan && !kept.empty()) {
    const double baseline = min_time_ms(cfg.timing_repeats, [&] {
      (void)runner.uncached(true, false);
    });
    const double full_cache = min_time_ms(cfg.timing_repeats, [&] {
      (void)runner.cached(true, false, false);
    });
    const double anchored = min_time_ms(cfg.timing_repeats, [&] {
      (void)runner.cached(true, true, false);
    });
    rep.wall_ms["baseline_non_caching"] = baseline;
    rep.wall_ms["full_caching"] = full_cache;
    rep.wall_ms["anchor_caching"] = anchored;
    rep.acceleration_ratio = baseline / anchored;
    rep.acceleration_vs_full_cache = full_cache / anchored;
    rep.config["acceleration_baseline"] = "non-caching";
  }
  rep.validate();
  return res;
}

// ---------------------------------------------------------------------------
// Anchor-position ablation

AblationReport ablation_anchor_positions(std::span<const AblationArm> arms,
                                         const Vocab& vocab,
                                         std::span<const McItem> items,
                                         std::span<const McItem> demo_pool,
                                         McTaskConfig cfg) {
  AblationReport rep;
  for (const auto& arm : arms) {
    ANCHORLM_EXPECT(arm.weights != nullptr, "ablation arm without weights");
    cfg.policy = arm.policy;
    rep.names.push_back(arm.name);
    rep.outcomes.push_back(run_mc_task(*arm.weights, vocab, items, demo_pool, cfg));
  }
  rep.matched_item_order = true;
  for (const auto& o : rep.outcomes) {
    rep.matched_item_order =
        rep.matched_item_order && o.item_order == rep.outcomes.front().item_order;
  }
  if (!rep.matched_item_order) {
    throw InternalError("ablation arms evaluated different item orders");
  }
  return rep;
}

std::string AblationReport::to_text() const {
  ordered_json j;
  j["task"] = "ablation_anchor_positions";
  j["matched_item_order"] = matched_item_order;
  j["reference_note"] =
      "large-scale ordering: every-demonstration > every-10-tokens, random-0.1";
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& r = outcomes[i].report;
    ordered_json row;
    row["arm"] = names[i];
    row["policy"] = r.config.at("policy");
    row["accuracy"] = r.accuracy ? ordered_json(*r.accuracy) : ordered_json(nullptr);
    row["cache_reduction"] = r.cache_reduction;
    row["peak_cache"] = r.peak_cache;
    row["skipped"] = r.skipped;
    rows.push_back(row);
  }
  j["arms"] = rows;
  return j.dump(2) + "\n";
}

}  // namespace anchorlm
