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

#include "anchorlm/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "anchorlm/error.hpp"

namespace anchorlm {

namespace {

constexpr const char* kFormat = "anchorlm-checkpoint-1";

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_f64(const std::filesystem::path& path, std::span<const double> xs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  std::vector<unsigned char> bytes(xs.size() * 8);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(xs[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path.string());
}

std::vector<double> read_f64(const std::filesystem::path& path,
                             std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<unsigned char> bytes(count * 8);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size() || in.peek() != EOF) {
    throw InputError(path.string() + " does not hold " + std::to_string(count) +
                     " float64 values");
  }
  std::vector<double> xs(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    }
    xs[i] = std::bit_cast<double>(bits);
  }
  return xs;
}

}  // namespace

std::string manifest_text(const ModelWeights& w, const std::string& vocab_hash,
                          std::size_t step, const OptimizerState* optimizer) {
  const ModelConfig& c = w.config;
  std::ostringstream os;
  os << "format " << kFormat << "\n"
     << "vocab_size " << c.vocab_size << "\n"
     << "n_layers " << c.n_layers << "\n"
     << "n_heads " << c.n_heads << "\n"
     << "d_model " << c.d_model << "\n"
     << "d_ff " << c.d_ff << "\n"
     << "context_len " << c.context_len << "\n"
     << "rope_base " << fmt_double(c.rope_base) << "\n"
     << "norm_eps " << fmt_double(c.norm_eps) << "\n"
     << "vocab_hash " << vocab_hash << "\n"
     << "step " << step << "\n";
  if (optimizer) {
    os << "optimizer adamw " << optimizer->steps << " "
       << optimizer->tokens_seen << "\n";
  }
  for (const auto& t : w.layout.tensors) {
    os << "tensor " << t.name << " " << t.rows << " " << t.cols << "\n";
  }
  return os.str();
}

void save_checkpoint(const std::filesystem::path& dir, const ModelWeights& w,
                     const std::string& vocab_hash, std::size_t step,
                     const OptimizerState* optimizer) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.txt", std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint in " + dir.string());
    out << manifest_text(w, vocab_hash, step, optimizer);
  }
  write_f64(dir / "weights.bin", w.params);
  if (optimizer) {
    std::vector<double> both(optimizer->m);
    both.insert(both.end(), optimizer->v.begin(), optimizer->v.end());
    write_f64(dir / "optim.bin", both);
  } else {
    std::filesystem::remove(dir / "optim.bin");
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw InputError("no checkpoint manifest in " + dir.string());
  ModelConfig c;
  Checkpoint ck;
  std::vector<TensorInfo> declared;
  bool has_optimizer = false;
  OptimizerState opt;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    bool ok = true;
    if (key == "format") {
      std::string f;
      ok = static_cast<bool>(ls >> f);
      if (ok && f != kFormat) throw InputError("unsupported checkpoint format " + f);
    } else if (key == "vocab_size") {
      ok = static_cast<bool>(ls >> c.vocab_size);
    } else if (key == "n_layers") {
      ok = static_cast<bool>(ls >> c.n_layers);
    } else if (key == "n_heads") {
      ok = static_cast<bool>(ls >> c.n_heads);
    } else if (key == "d_model") {
      ok = static_cast<bool>(ls >> c.d_model);
    } else if (key == "d_ff") {
      ok = static_cast<bool>(ls >> c.d_ff);
    } else if (key == "context_len") {
      ok = static_cast<bool>(ls >> c.context_len);
    } else if (key == "rope_base") {
      ok = static_cast<bool>(ls >> c.rope_base);
    } else if (key == "norm_eps") {
      ok = static_cast<bool>(ls >> c.norm_eps);
    } else if (key == "vocab_hash") {
      ok = static_cast<bool>(ls >> ck.vocab_hash);
    } else if (key == "step") {
      ok = static_cast<bool>(ls >> ck.step);
    } else if (key == "optimizer") {
      std::string kind;
      ok = static_cast<bool>(ls >> kind >> opt.steps >> opt.tokens_seen) &&
           kind == "adamw";
      has_optimizer = ok;
    } else if (key == "tensor") {
      TensorInfo t;
      ok = static_cast<bool>(ls >> t.name >> t.rows >> t.cols);
      declared.push_back(t);
    } else {
      ok = false;
    }
    if (!ok) {
      throw InputError("bad checkpoint manifest line " + std::to_string(line_no) +
                       ": " + line);
    }
  }
  c.validate();
  ck.weights.config = c;
  ck.weights.layout = ParamLayout::make(c);
  const auto& expect = ck.weights.layout.tensors;
  if (declared.size() != expect.size()) {
    throw InputError("checkpoint tensor list does not match its config");
  }
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (declared[i].name != expect[i].name || declared[i].rows != expect[i].rows ||
        declared[i].cols != expect[i].cols) {
      throw InputError("checkpoint tensor '" + declared[i].name +
                       "' does not match the expected layout");
    }
  }
  ck.weights.params = read_f64(dir / "weights.bin", ck.weights.layout.total);
  if (has_optimizer) {
    const std::size_t n = ck.weights.layout.total;
    auto both = read_f64(dir / "optim.bin", 2 * n);
    opt.m.assign(both.begin(), both.begin() + static_cast<std::ptrdiff_t>(n));
    opt.v.assign(both.begin() + static_cast<std::ptrdiff_t>(n), both.end());
    ck.optimizer = std::move(opt);
  }
  return ck;
}

}  // namespace anchorlm
