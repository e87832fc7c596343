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

#include <exception>
#include <map>
#include <string>

namespace anchorlm::cli {

inline constexpr const char* kVersion = "anchorlm 0.1.0";
// Default for `train --data` and `eval --data` when the flag is absent.
inline constexpr const char* kDataDirEnv = "ANCHORLM_DATA_DIR";
// Parent of auto-named run directories (default "runs").
inline constexpr const char* kRunsDirEnv = "ANCHORLM_RUNS_DIR";

// Process exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

// Entry point of the `anchorlm` binary.
int run(int argc, char** argv);

// "key = value" lines, as written for data.cfg.
std::map<std::string, std::string> parse_kv(const std::string& text);

}  // namespace anchorlm::cli
