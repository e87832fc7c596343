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
#include <string>
#include <vector>

#include "anchorlm/eval.hpp"

namespace anchorlm {

// A small seeded world of people with fixed attributes. Every sentence the
// generator writes is true in the world, so a tiny model can learn the facts
// and answer completion questions about them.
class SyntheticWorld {
 public:
  enum class Relation { kLikes, kLivesIn, kOwns };

  explicit SyntheticWorld(std::uint64_t seed);

  std::size_t num_people() const { return people_.size(); }
  const std::string& person(std::size_t i) const { return people_[i]; }

  // "alice likes" / "alice lives in" / "alice owns a"
  std::string prompt(std::size_t person, Relation rel) const;
  std::string answer(std::size_t person, Relation rel) const;
  const std::vector<std::string>& candidates(Relation rel) const;
  std::string sentence(std::size_t person, Relation rel) const;

 private:
  std::vector<std::string> people_;
  std::vector<std::size_t> food_, place_, object_;
};

// Documents of several world sentences each, one per line, until the total
// size reaches `target_bytes`.
std::vector<std::string> synthetic_documents(std::uint64_t seed,
                                             std::size_t target_bytes);

struct SyntheticTask {
  std::vector<McItem> items;
  std::vector<McItem> demo_pool;
};

// Completion items over world facts. The gold answer is shuffled among
// `n_choices` candidates of the same relation.
SyntheticTask synthetic_mc_task(std::uint64_t seed, std::size_t n_items,
                                std::size_t pool_size, std::size_t n_choices);

}  // namespace anchorlm
