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

#include "anchorlm/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "anchorlm/checkpoint.hpp"
#include "anchorlm/corpus.hpp"
#include "anchorlm/error.hpp"
#include "anchorlm/eval.hpp"
#include "anchorlm/infer.hpp"
#include "anchorlm/synthetic.hpp"
#include "anchorlm/train.hpp"
#include "anchorlm/util.hpp"

namespace anchorlm::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string digest_of(const std::string& bytes) { return hex64(fnv1a64(bytes)); }

std::string utc_timestamp(std::chrono::system_clock::time_point t,
                          const char* format) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, format, &tm);
  return buf;
}

// One per command invocation; written as <out>/manifest.json.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;   // path -> content digest
  std::map<std::string, std::string> outputs;  // name -> content digest
  std::map<std::string, double> wall_ms;
  std::chrono::system_clock::time_point started = std::chrono::system_clock::now();

  void add_input(const fs::path& path) {
    inputs[path.string()] = digest_of(read_file(path));
  }

  // Digest of the command and its resolved config; names the run directory.
  std::string short_digest() const {
    std::string s = command;
    for (const auto& [k, v] : config) s += "\n" + k + "=" + v;
    return digest_of(s).substr(0, 8);
  }

  void write(const fs::path& dir) const {
    const auto finished = std::chrono::system_clock::now();
    ordered_json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["started"] = utc_timestamp(started, "%Y-%m-%dT%H:%M:%SZ");
    j["finished"] = utc_timestamp(finished, "%Y-%m-%dT%H:%M:%SZ");
    j["wall_ms"] = wall_ms;
    write_file(dir / "manifest.json", j.dump(2) + "\n");
  }
};

fs::path resolve_out(const std::string& flag, const RunManifest& m) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv(kRunsDirEnv);
  const fs::path base = env && *env ? env : "runs";
  return base / (utc_timestamp(m.started, "%Y%m%dT%H%M%SZ") + "-" + m.short_digest());
}

std::string resolve_data(const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv(kDataDirEnv);
  if (env && *env) return env;
  throw UsageError(std::string("--data is required (or set ") + kDataDirEnv + ")");
}

std::string join_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

// Data written by `prepare` and copied next to every checkpoint.
struct DataInfo {
  AnchorPolicy policy;
  std::size_t context_len = 0;
  Vocab vocab;

  static DataInfo load(const fs::path& dir) {
    const auto kv = parse_kv(read_file(dir / "data.cfg"));
    auto get = [&](const std::string& k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw InputError(dir.string() + "/data.cfg lacks " + k);
      return it->second;
    };
    DataInfo d;
    d.policy = AnchorPolicy::parse(get("policy"));
    d.context_len = std::stoul(get("context_len"));
    d.vocab = Vocab::load(dir / "vocab.txt");
    if (digest_of(d.vocab.serialize()) != get("vocab_hash")) {
      throw InputError("vocab in " + dir.string() + " does not match data.cfg");
    }
    return d;
  }

  void save(const fs::path& dir) const {
    vocab.save(dir / "vocab.txt");
    write_file(dir / "data.cfg", join_kv({{"policy", policy.to_string()},
                                          {"context_len", std::to_string(context_len)},
                                          {"vocab_hash", vocab_hash()}}));
  }

  std::string vocab_hash() const { return digest_of(vocab.serialize()); }

  // Token id that closes a sequence for this data's policy.
  std::optional<TokenId> closing_id() const {
    return policy.inserts_anchor_token() ? vocab.anchor_id() : vocab.endpoint_id();
  }
};

// Annotates every non-empty line; errors carry file:line context.
std::vector<SegmentedText> annotate_file(const fs::path& path, const Vocab& vocab,
                                         const AnchorPolicy& policy) {
  std::istringstream in(read_file(path));
  std::vector<SegmentedText> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(annotate(line, vocab, policy));
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + ":" + std::to_string(line_no) + ": " +
                                e.what());
    }
  }
  if (out.empty()) throw EmptyCorpusError(path.string() + " holds no text");
  return out;
}

struct LoadedModel {
  Checkpoint ckpt;
  DataInfo data;
};

LoadedModel load_model(const fs::path& dir) {
  LoadedModel m{load_checkpoint(dir), DataInfo::load(dir)};
  if (m.ckpt.vocab_hash != m.data.vocab_hash()) {
    throw InputError("checkpoint " + dir.string() + " was trained on another vocab");
  }
  return m;
}

void save_run_checkpoint(const fs::path& dir, const Trainer& t,
                         const DataInfo& data) {
  const OptimizerState opt{t.optimizer().steps_taken(), t.tokens_seen(),
                           t.optimizer().first_moment(),
                           t.optimizer().second_moment()};
  save_checkpoint(dir, t.weights(), data.vocab_hash(), t.steps_done(), &opt);
  data.save(dir);
}

// ---------------------------------------------------------------------------

struct PrepareArgs {
  std::vector<std::string> corpus;
  std::string policy = "ac";
  std::size_t vocab_size = 4096;
  std::size_t context_len = 256;
  std::string out;
  std::string vocab;
};

void cmd_prepare(const PrepareArgs& a) {
  RunManifest m;
  m.command = "prepare";
  DataInfo d;
  d.policy = AnchorPolicy::parse(a.policy);
  d.context_len = a.context_len;
  m.config = {{"policy", d.policy.to_string()},
              {"vocab_size", std::to_string(a.vocab_size)},
              {"context_len", std::to_string(a.context_len)},
              {"vocab", a.vocab}};
  for (const auto& c : a.corpus) m.add_input(c);

  if (!a.vocab.empty()) {
    m.add_input(a.vocab);
    d.vocab = Vocab::load(a.vocab);
  } else {
    std::vector<std::string> docs;
    for (const auto& c : a.corpus) {
      for (auto& doc : read_documents(c)) docs.push_back(std::move(doc));
    }
    d.vocab = build_vocab_from_documents(docs, d.policy, a.vocab_size);
  }
  if (d.policy.inserts_anchor_token() && !d.vocab.anchor_id()) {
    throw ConfigError("policy " + d.policy.to_string() +
                      " needs a vocab with <AC>; rebuild it without --vocab");
  }

  std::vector<SegmentedText> texts;
  for (const auto& c : a.corpus) {
    for (auto& t : annotate_file(c, d.vocab, d.policy)) texts.push_back(std::move(t));
  }
  const auto blocks = pack_training_blocks(texts, a.context_len);
  if (blocks.empty()) throw EmptyCorpusError("corpus produced no training blocks");

  const fs::path out = resolve_out(a.out, m);
  fs::create_directories(out);
  const std::string block_text = serialize_blocks(blocks);
  write_file(out / "blocks.txt", block_text);
  d.save(out);
  m.outputs = {{"blocks.txt", digest_of(block_text)},
               {"vocab.txt", d.vocab_hash()}};
  m.wall_ms["total"] = std::chrono::duration<double, std::milli>(
                           std::chrono::system_clock::now() - m.started)
                           .count();
  m.write(out);
  std::size_t tokens = 0;
  for (const auto& b : blocks) tokens += b.size();
  std::cout << "prepared " << blocks.size() << " blocks, " << tokens
            << " tokens, vocab " << d.vocab.size() << " -> " << out.string()
            << "\n";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string mask_mode;
  std::string config;
  std::string out;
  std::string resume;
  std::optional<std::size_t> steps, batch_size, warmup, checkpoint_every;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::size_t layers = 2, heads = 4, d_model = 64, d_ff = 256;
};

void cmd_train(const TrainArgs& a) {
  RunManifest m;
  m.command = "train";
  const fs::path data_dir = resolve_data(a.data);
  const DataInfo data = DataInfo::load(data_dir);
  m.add_input(data_dir / "blocks.txt");
  m.add_input(data_dir / "vocab.txt");

  // defaults < config file < flags
  TrainConfig cfg;
  cfg.policy = data.policy;
  if (!a.config.empty()) {
    m.add_input(a.config);
    cfg = TrainConfig::parse(read_file(a.config), cfg);
  }
  if (!a.mask_mode.empty()) cfg.mask_mode = parse_mask_mode(a.mask_mode);
  if (a.steps) cfg.steps = *a.steps;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.warmup) cfg.warmup_steps = *a.warmup;
  if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  const auto blocks = parse_blocks(read_file(data_dir / "blocks.txt"));
  for (const auto& b : blocks) {
    for (TokenId id : b.ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= data.vocab.size()) {
        throw InputError("block file holds ids outside the vocab");
      }
    }
  }

  std::optional<Trainer> trainer;
  if (!a.resume.empty()) {
    auto loaded = load_model(a.resume);
    if (loaded.data.vocab_hash() != data.vocab_hash()) {
      throw ConfigError("--resume checkpoint uses a different vocab");
    }
    trainer.emplace(cfg, std::move(loaded.ckpt.weights));
    if (!loaded.ckpt.optimizer) {
      throw InputError("checkpoint has no optimizer state to resume from");
    }
    auto& o = *loaded.ckpt.optimizer;
    trainer->restore(o.steps, o.tokens_seen, std::move(o.m), std::move(o.v));
  } else {
    ModelConfig mc;
    mc.vocab_size = data.vocab.size();
    mc.n_layers = a.layers;
    mc.n_heads = a.heads;
    mc.d_model = a.d_model;
    mc.d_ff = a.d_ff;
    mc.context_len = data.context_len;
    mc.validate();
    trainer.emplace(cfg, init_weights(mc, cfg.seed, data.vocab.anchor_id()));
  }
  const ModelConfig& mc = trainer->weights().config;

  m.config = parse_kv(cfg.to_text());
  m.config["model.n_layers"] = std::to_string(mc.n_layers);
  m.config["model.n_heads"] = std::to_string(mc.n_heads);
  m.config["model.d_model"] = std::to_string(mc.d_model);
  m.config["model.d_ff"] = std::to_string(mc.d_ff);
  m.config["model.context_len"] = std::to_string(mc.context_len);
  m.config["model.vocab_size"] = std::to_string(mc.vocab_size);
  if (!a.resume.empty()) m.config["resume"] = a.resume;
  m.seeds["init_and_schedule"] = cfg.seed;

  const fs::path out = resolve_out(a.out, m);
  fs::create_directories(out);
  TrainHooks hooks;
  hooks.on_step = [&](const Trainer& t, const StepRecord& rec) {
    if (cfg.checkpoint_every && rec.step % cfg.checkpoint_every == 0) {
      save_run_checkpoint(out / ("checkpoint-" + std::to_string(rec.step)), t, data);
    }
    std::cerr << "step " << rec.step << " loss " << rec.loss << "\n";
  };
  const TrainReport report = train_from(*trainer, blocks, hooks);

  save_run_checkpoint(out / "checkpoint", *trainer, data);
  const std::string log = format_step_log(report.steps, false);
  write_file(out / "train_log.tsv", log);
  write_file(out / "train_config.txt", cfg.to_text());
  m.outputs = {{"train_log.tsv", digest_of(log)},
               {"checkpoint/weights.bin",
                digest_of(read_file(out / "checkpoint" / "weights.bin"))}};
  m.wall_ms["train"] = report.wall_ms;
  m.write(out);
  std::cout << "trained to step " << trainer->steps_done() << ", final loss "
            << (report.steps.empty() ? 0.0 : report.steps.back().loss) << " -> "
            << (out / "checkpoint").string() << "\n";
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string ckpt;
  std::string prompt;
  std::string policy;
  std::string reduce = "on";
  std::size_t max_new = 16;
  bool strip_anchors = false;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  std::int64_t protect = 0;
  std::string out;
};

bool ends_sentence(const std::string& text) {
  const auto last = text.find_last_not_of(" \t\r\n");
  return last != std::string::npos &&
         (text[last] == '.' || text[last] == '!' || text[last] == '?');
}

void cmd_generate(const GenerateArgs& a) {
  if (a.reduce != "on" && a.reduce != "off") {
    throw UsageError("--reduce takes on or off");
  }
  const auto model = load_model(a.ckpt);
  const Vocab& vocab = model.data.vocab;
  const AnchorPolicy policy =
      a.policy.empty() ? model.data.policy : AnchorPolicy::parse(a.policy);

  SegmentedText prefix = annotate(a.prompt, vocab, policy);
  // An unfinished last sentence stays open for the model to continue.
  if (policy.mode == AnchorPolicy::Mode::kAnchor && !ends_sentence(a.prompt) &&
      !prefix.empty() && prefix.is_anchor.back()) {
    prefix.ids.pop_back();
    prefix.is_anchor.pop_back();
    prefix.seq_index.pop_back();
  }
  if (prefix.empty()) throw ContractError("prompt has no tokens");

  GenerationConfig g;
  g.max_new_tokens = a.max_new;
  g.sampling = a.temperature > 0.0 ? Sampling::with_temperature(a.temperature, a.seed)
                                   : Sampling::greedy();
  g.eos_id = vocab.eos_id();
  const auto closing = policy.inserts_anchor_token() ? vocab.anchor_id()
                                                     : vocab.endpoint_id();
  g.anchor_id = closing.value_or(-1);
  g.reduction_enabled = a.reduce == "on";
  g.protected_upto = a.protect;
  const auto res = generate(model.ckpt.weights, prefix, g);

  std::vector<TokenId> ids = res.ids;
  if (!ids.empty() && ids.back() == vocab.eos_id()) ids.pop_back();
  const std::string text = vocab.decode(ids, a.strip_anchors);
  std::cout << text << "\n";
  std::cerr << "prefix_tokens " << prefix.size() << " generated " << res.ids.size()
            << " live_cache " << res.live_sizes.back() << " peak_cache "
            << res.stats.peak_live_count << "\n";

  if (!a.out.empty()) {
    RunManifest m;
    m.command = "generate";
    m.config = {{"ckpt", a.ckpt},          {"prompt", a.prompt},
                {"policy", policy.to_string()}, {"reduce", a.reduce},
                {"max_new", std::to_string(a.max_new)},
                {"temperature", std::to_string(a.temperature)},
                {"protect", std::to_string(a.protect)}};
    m.seeds["sampling"] = a.seed;
    m.add_input(fs::path(a.ckpt) / "weights.bin");
    ordered_json j;
    j["text"] = text;
    j["ids"] = res.ids;
    j["live_sizes"] = res.live_sizes;
    j["peak_cache"] = res.stats.peak_live_count;
    j["appended"] = res.stats.total_appends;
    j["discarded"] = res.stats.total_discards;
    const std::string body = j.dump(2) + "\n";
    write_file(fs::path(a.out) / "generation.json", body);
    m.outputs["generation.json"] = digest_of(body);
    m.wall_ms = {{"prefix", res.prefix_ms}, {"decode", res.decode_ms}};
    m.write(a.out);
  }
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string task;
  std::string data;
  std::string mask_mode = "ansan";
  std::size_t eval_context_len = 0;
  std::string items;
  std::string demos;
  std::size_t shots = 0;
  std::string reuse = "on";
  std::uint64_t seed = 0;
  bool speed = false;
  std::vector<std::string> arms;
  std::string out;
};

void cmd_eval(const EvalArgs& a) {
  RunManifest m;
  m.command = "eval";
  m.config = {{"task", a.task}, {"mask_mode", a.mask_mode}};
  m.seeds["demonstrations"] = a.seed;
  const bool use_ansan = parse_mask_mode(a.mask_mode) == MaskMode::kAnsan;
  if (a.reuse != "on" && a.reuse != "off") throw UsageError("--reuse takes on or off");

  std::string body;
  std::string name = "report.json";
  if (a.task == "ppl") {
    if (a.ckpt.empty()) throw UsageError("eval ppl needs --ckpt");
    const auto model = load_model(a.ckpt);
    const fs::path data = resolve_data(a.data);
    m.add_input(data);
    const auto texts = annotate_file(data, model.data.vocab, model.data.policy);
    const std::size_t window =
        a.eval_context_len ? a.eval_context_len : model.ckpt.weights.config.context_len;
    const auto excluded = model.data.policy.inserts_anchor_token()
                              ? model.data.vocab.anchor_id()
                              : std::nullopt;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = perplexity(model.ckpt.weights, texts, parse_mask_mode(a.mask_mode),
                              window, excluded);
    MetricsReport rep;
    rep.task = "ppl";
    rep.perplexity = r.perplexity;
    rep.scored_tokens = r.scored;
    rep.items = texts.size();
    rep.config = {{"policy", model.data.policy.to_string()},
                  {"mask_mode", a.mask_mode},
                  {"eval_context_len", std::to_string(window)},
                  {"shots", "0"}};
    m.wall_ms["eval"] = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
    body = rep.to_text();
    m.config.insert(rep.config.begin(), rep.config.end());
  } else if (a.task == "mc" || a.task == "ablation") {
    if (a.items.empty()) throw UsageError("eval " + a.task + " needs --items");
    m.add_input(a.items);
    const auto items = load_mc_items(a.items);
    std::vector<McItem> pool;
    if (!a.demos.empty()) {
      m.add_input(a.demos);
      pool = load_mc_items(a.demos);
    }
    McTaskConfig cfg;
    cfg.shots = a.shots;
    cfg.use_ansan = use_ansan;
    cfg.reuse_demo_cache = a.reuse == "on";
    cfg.seed = a.seed;
    cfg.measure_speed = a.speed;
    m.config["shots"] = std::to_string(a.shots);
    m.config["reuse"] = a.reuse;
    if (a.task == "mc") {
      if (a.ckpt.empty()) throw UsageError("eval mc needs --ckpt");
      const auto model = load_model(a.ckpt);
      cfg.policy = model.data.policy;
      const auto outcome =
          run_mc_task(model.ckpt.weights, model.data.vocab, items, pool, cfg);
      body = outcome.report.to_text();
      m.wall_ms = outcome.report.wall_ms;
    } else {
      if (a.arms.empty()) throw UsageError("eval ablation needs --arm name=policy=ckpt");
      std::vector<LoadedModel> models;
      std::vector<AblationArm> arms;
      std::vector<std::string> names, policies;
      for (const auto& spec : a.arms) {
        const auto p1 = spec.find('=');
        const auto p2 = spec.find('=', p1 == std::string::npos ? p1 : p1 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos) {
          throw UsageError("--arm takes name=policy=checkpoint, got " + spec);
        }
        names.push_back(spec.substr(0, p1));
        policies.push_back(spec.substr(p1 + 1, p2 - p1 - 1));
        models.push_back(load_model(spec.substr(p2 + 1)));
        m.config["arm." + names.back()] = spec;
      }
      for (std::size_t i = 0; i < models.size(); ++i) {
        if (models[i].data.vocab_hash() != models[0].data.vocab_hash()) {
          throw ConfigError("ablation arms must share one vocab");
        }
        arms.push_back({names[i], AnchorPolicy::parse(policies[i]),
                        &models[i].ckpt.weights});
      }
      const auto rep =
          ablation_anchor_positions(arms, models[0].data.vocab, items, pool, cfg);
      body = rep.to_text();
      name = "ablation.json";
    }
  } else {
    throw UsageError("--task takes ppl, mc or ablation");
  }

  std::cout << body;
  const fs::path out = resolve_out(a.out, m);
  write_file(out / name, body);
  m.outputs[name] = digest_of(body);
  m.write(out);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t bytes = 200000;
  std::size_t heldout_bytes = 20000;
  std::size_t items = 50;
  std::size_t pool = 50;
  std::size_t choices = 4;
};

void cmd_synth(const SynthArgs& a) {
  if (a.out.empty()) throw UsageError("synth needs --out");
  const fs::path out = a.out;
  auto join = [](const std::vector<std::string>& docs) {
    std::string s;
    for (const auto& d : docs) s += d + "\n";
    return s;
  };
  write_file(out / "corpus.txt", join(synthetic_documents(a.seed, a.bytes)));
  write_file(out / "heldout.txt",
             join(synthetic_documents(mix_seed(a.seed, 99), a.heldout_bytes)));
  const auto task = synthetic_mc_task(a.seed, a.items, a.pool, a.choices);
  write_file(out / "task.jsonl", serialize_mc_items(task.items));
  write_file(out / "demos.jsonl", serialize_mc_items(task.demo_pool));
  std::cout << "wrote corpus.txt heldout.txt task.jsonl demos.jsonl to "
            << out.string() << "\n";
}

}  // namespace

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  for (std::string line; std::getline(in, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return static_cast<int>(err->kind());
  }
  if (dynamic_cast<const fs::filesystem_error*>(&e)) {
    return static_cast<int>(ErrorKind::kInput);
  }
  if (dynamic_cast<const std::invalid_argument*>(&e) ||
      dynamic_cast<const std::out_of_range*>(&e)) {
    return static_cast<int>(ErrorKind::kInput);
  }
  return static_cast<int>(ErrorKind::kInternal);
}

int run(int argc, char** argv) {
  CLI::App app{"Anchor-based language model toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare", "Build a vocab and packed training blocks");
  p->add_option("--corpus", prep.corpus, "Corpus text files, one document per line")
      ->required()
      ->expected(1, -1);
  p->add_option("--policy", prep.policy, "Anchor policy: ep, ac, every:N, random:P[:SEED]");
  p->add_option("--vocab-size", prep.vocab_size, "Maximum vocab size");
  p->add_option("--context-len", prep.context_len, "Block length in tokens");
  p->add_option("--out", prep.out, "Output data directory");
  p->add_option("--vocab", prep.vocab, "Reuse an existing vocab file");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on prepared data");
  t->add_option("--data", tr.data, "Data directory from prepare");
  t->add_option("--mask-mode", tr.mask_mode, "ansan or causal");
  t->add_option("--config", tr.config, "Training config file (key = value)");
  t->add_option("--out", tr.out, "Run directory");
  t->add_option("--resume", tr.resume, "Checkpoint directory to continue from");
  t->add_option("--steps", tr.steps, "Total optimizer steps");
  t->add_option("--batch-size", tr.batch_size, "Blocks per step");
  t->add_option("--warmup", tr.warmup, "Warmup steps");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Periodic checkpoint interval");
  t->add_option("--lr", tr.lr, "Peak learning rate");
  t->add_option("--seed", tr.seed, "Seed for init and batch order");
  t->add_option("--layers", tr.layers, "Transformer layers");
  t->add_option("--heads", tr.heads, "Attention heads");
  t->add_option("--d-model", tr.d_model, "Model width");
  t->add_option("--d-ff", tr.d_ff, "Feed-forward width");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate text with anchor-based caching");
  g->add_option("--ckpt", gen.ckpt, "Checkpoint directory")->required();
  g->add_option("--prompt", gen.prompt, "Prompt text")->required();
  g->add_option("--policy", gen.policy, "Anchor policy (default: the training policy)");
  g->add_option("--reduce", gen.reduce, "Cache reduction: on or off");
  g->add_option("--max-new", gen.max_new, "Maximum generated tokens");
  g->add_flag("--strip-anchors", gen.strip_anchors, "Drop inserted anchors from output");
  g->add_option("--temperature", gen.temperature, "Sampling temperature (0 = greedy)");
  g->add_option("--seed", gen.seed, "Sampling seed");
  g->add_option("--protect", gen.protect, "Positions below this are never discarded");
  g->add_option("--out", gen.out, "Also write generation.json and a manifest here");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate perplexity or multiple-choice accuracy");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint directory");
  e->add_option("--task", ev.task, "ppl, mc or ablation")->required();
  e->add_option("--data", ev.data, "Held-out text for ppl");
  e->add_option("--mask-mode", ev.mask_mode, "ansan or causal");
  e->add_option("--eval-context-len", ev.eval_context_len, "Perplexity window");
  e->add_option("--items", ev.items, "Multiple-choice items (JSONL)");
  e->add_option("--demos", ev.demos, "Demonstration pool (JSONL)");
  e->add_option("--shots", ev.shots, "Demonstrations per prompt");
  e->add_flag("--ansan{ansan},--causal{causal}", ev.mask_mode, "Mask mode shorthand");
  e->add_option("--reuse", ev.reuse, "Reuse the demonstration cache: on or off");
  e->add_option("--seed", ev.seed, "Seed for drawing demonstrations");
  e->add_flag("--speed", ev.speed, "Measure the acceleration ratio");
  e->add_option("--arm", ev.arms, "Ablation arm name=policy=checkpoint");
  e->add_option("--out", ev.out, "Run directory");

  SynthArgs sy;
  auto* s = app.add_subcommand("synth", "Write a synthetic corpus and task files");
  s->add_option("--out", sy.out, "Output directory")->required();
  s->add_option("--seed", sy.seed, "World seed");
  s->add_option("--bytes", sy.bytes, "Training corpus size");
  s->add_option("--heldout-bytes", sy.heldout_bytes, "Held-out corpus size");
  s->add_option("--items", sy.items, "Task items");
  s->add_option("--pool", sy.pool, "Demonstration pool size");
  s->add_option("--choices", sy.choices, "Choices per item");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return static_cast<int>(ErrorKind::kUsage);
  }

  try {
    if (*p) cmd_prepare(prep);
    if (*t) cmd_train(tr);
    if (*g) cmd_generate(gen);
    if (*e) cmd_eval(ev);
    if (*s) cmd_synth(sy);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return exit_code_for(ex);
  }
  return 0;
}

}  // namespace anchorlm::cli
