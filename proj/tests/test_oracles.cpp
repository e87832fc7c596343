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

#include <doctest.h>

#include <cmath>

#include "oracles/oracles.hpp"

// Sanity of the references themselves, on cases small enough to do by hand.
TEST_SUITE("oracles") {

TEST_CASE("mask oracle trivia") {
  CHECK(oracles::naive_anchor_mask({0}, {0}).bits == oracles::BitMatrix{{1}});
  CHECK(oracles::naive_anchor_mask({0, 0, 0}, {0, 0, 0}).bits ==
        oracles::BitMatrix{{1, 0, 0}, {1, 1, 0}, {1, 1, 1}});
}

TEST_CASE("reduction oracle trivia") {
  CHECK(oracles::naive_reduction({}, {}).empty());
  CHECK(oracles::naive_reduction({1, 1, 1}, {0, 1, 2}) == std::vector<int>{0, 1, 2});
  CHECK(oracles::naive_reduction({0, 0, 1, 0, 0}, {0, 1, 2, 3, 4}) == std::vector<int>{2, 3, 4});
  CHECK(oracles::naive_reduction({0, 1, 0, 1}, {0, 1, 2, 3}) == std::vector<int>{1, 3});
  CHECK(oracles::naive_reduction({0, 0}, {0, 1}) == std::vector<int>{0, 1});
}

TEST_CASE("attention oracle with one token is a per-token transform") {
  // vocab 2, d 2, one head, no layers: logits = head * norm(embedding).
  oracles::TinyDims d{2, 0, 1, 2, 2, 10000.0, 0.0};
  std::vector<double> p = {3, 4, 1, 0,  // embeddings
                           1, 1,        // final norm
                           1, 0, 0, 1};  // head
  const auto r = oracles::naive_attention(d, p, {0}, {{1}}, {0});
  // rms of (3, 4) is sqrt(12.5)
  CHECK(r.values[0] == doctest::Approx(3 / std::sqrt(12.5)));
  CHECK(r.values[1] == doctest::Approx(4 / std::sqrt(12.5)));
}

}  // TEST_SUITE
