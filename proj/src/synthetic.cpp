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

#include "anchorlm/synthetic.hpp"

#include <algorithm>

#include "anchorlm/error.hpp"
#include "anchorlm/util.hpp"

namespace anchorlm {

namespace {

const std::vector<std::string> kPeople = {
    "alice", "bob",   "carol", "dave",  "erin",  "frank", "grace", "heidi",
    "ivan",  "judy",  "mallory", "niaj", "olivia", "peggy", "rupert", "sybil",
    "trent", "victor", "walter", "yolanda"};
const std::vector<std::string> kFoods = {"apples", "bread",  "cheese", "figs",
                                         "grapes", "lemons", "olives", "rice"};
const std::vector<std::string> kPlaces = {"paris", "lima",  "oslo", "cairo",
                                          "delhi", "quito", "rome", "tokyo"};
const std::vector<std::string> kObjects = {"boat", "car",  "drum", "harp",
                                           "kite", "lamp", "sled", "vase"};

using Relation = SyntheticWorld::Relation;

constexpr Relation kRelations[] = {Relation::kLikes, Relation::kLivesIn,
                                   Relation::kOwns};

}  // namespace

SyntheticWorld::SyntheticWorld(std::uint64_t seed) : people_(kPeople) {
  Rng rng(mix_seed(seed, 0x77));
  for (std::size_t i = 0; i < people_.size(); ++i) {
    food_.push_back(rng.below(kFoods.size()));
    place_.push_back(rng.below(kPlaces.size()));
    object_.push_back(rng.below(kObjects.size()));
  }
}

std::string SyntheticWorld::prompt(std::size_t p, Relation rel) const {
  switch (rel) {
    case Relation::kLikes: return people_[p] + " likes";
    case Relation::kLivesIn: return people_[p] + " lives in";
    case Relation::kOwns: return people_[p] + " owns a";
  }
  throw InternalError("unknown relation");
}

const std::vector<std::string>& SyntheticWorld::candidates(Relation rel) const {
  switch (rel) {
    case Relation::kLikes: return kFoods;
    case Relation::kLivesIn: return kPlaces;
    case Relation::kOwns: return kObjects;
  }
  throw InternalError("unknown relation");
}

std::string SyntheticWorld::answer(std::size_t p, Relation rel) const {
  switch (rel) {
    case Relation::kLikes: return kFoods[food_[p]];
    case Relation::kLivesIn: return kPlaces[place_[p]];
    case Relation::kOwns: return kObjects[object_[p]];
  }
  throw InternalError("unknown relation");
}

std::string SyntheticWorld::sentence(std::size_t p, Relation rel) const {
  return prompt(p, rel) + " " + answer(p, rel) + " .";
}

std::vector<std::string> synthetic_documents(std::uint64_t seed,
                                             std::size_t target_bytes) {
  const SyntheticWorld world(seed);
  Rng rng(mix_seed(seed, 0xd0c));
  std::vector<std::string> docs;
  std::size_t bytes = 0;
  while (bytes < target_bytes) {
    const std::size_t n = 3 + rng.below(6);
    std::string doc;
    for (std::size_t s = 0; s < n; ++s) {
      const auto p = rng.below(world.num_people());
      const auto rel = kRelations[rng.below(3)];
      if (!doc.empty()) doc += ' ';
      doc += world.sentence(p, rel);
    }
    bytes += doc.size() + 1;
    docs.push_back(std::move(doc));
  }
  return docs;
}

SyntheticTask synthetic_mc_task(std::uint64_t seed, std::size_t n_items,
                                std::size_t pool_size, std::size_t n_choices) {
  if (n_choices < 2 || n_choices > kFoods.size()) {
    throw ConfigError("choices per item must be in [2, 8]");
  }
  const SyntheticWorld world(seed);
  Rng rng(mix_seed(seed, 0x3c));
  auto make_item = [&] {
    const auto p = rng.below(world.num_people());
    const auto rel = kRelations[rng.below(3)];
    const std::string gold = world.answer(p, rel);
    std::vector<std::string> choices = {gold};
    std::vector<std::string> rest;
    for (const auto& c : world.candidates(rel)) {
      if (c != gold) rest.push_back(c);
    }
    for (std::size_t i = rest.size(); i > 1; --i) {
      std::swap(rest[i - 1], rest[rng.below(i)]);
    }
    choices.insert(choices.end(), rest.begin(),
                   rest.begin() + static_cast<std::ptrdiff_t>(n_choices - 1));
    for (std::size_t i = choices.size(); i > 1; --i) {
      std::swap(choices[i - 1], choices[rng.below(i)]);
    }
    McItem item;
    item.context = world.prompt(p, rel);
    item.gold = static_cast<std::size_t>(
        std::find(choices.begin(), choices.end(), gold) - choices.begin());
    item.choices = std::move(choices);
    return item;
  };
  SyntheticTask task;
  for (std::size_t i = 0; i < n_items; ++i) task.items.push_back(make_item());
  for (std::size_t i = 0; i < pool_size; ++i) task.demo_pool.push_back(make_item());
  return task;
}

}  // namespace anchorlm
