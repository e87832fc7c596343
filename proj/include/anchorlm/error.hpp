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

#include <stdexcept>
#include <string>

namespace anchorlm {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kUsage = 2,
  kInput = 3,
  kContract = 4,
  kNumeric = 5,
  kConfig = 6,
  kUndefinedMetric = 7,
  kInternal = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorKind::kUsage, w) {}
};
struct InputError : Error {
  explicit InputError(const std::string& w) : Error(ErrorKind::kInput, w) {}
};
struct EmptyCorpusError : InputError {
  explicit EmptyCorpusError(const std::string& w) : InputError(w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w)
      : Error(ErrorKind::kContract, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::kNumeric, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
struct UndefinedMetricError : Error {
  explicit UndefinedMetricError(const std::string& w)
      : Error(ErrorKind::kUndefinedMetric, w) {}
};
struct InternalError : Error {
  explicit InternalError(const std::string& w)
      : Error(ErrorKind::kInternal, w) {}
};

#define ANCHORLM_EXPECT(cond, msg)                  \
  do {                                              \
    if (!(cond)) throw ::anchorlm::ContractError(msg); \
  } while (false)

}  // namespace anchorlm
