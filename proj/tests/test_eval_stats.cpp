// Copyright 2026 The KnowMAN-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "knowman/error.hpp"
#include "knowman/eval_stats.hpp"
#include "knowman/rng.hpp"

using namespace knowman;

namespace {

using Ints = std::vector<int>;

// Exact two-sided p over all 2^n swap patterns, each equally likely.
double exact_p(const Ints& a, const Ints& b, const Ints& gold, Metric metric) {
  const std::size_t n = a.size();
  const double obs = std::abs(metric_value(metric, a, gold, 1) - metric_value(metric, b, gold, 1));
  std::size_t hits = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    Ints x = a, y = b;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) std::swap(x[i], y[i]);
    const double d = std::abs(metric_value(metric, x, gold, 1) - metric_value(metric, y, gold, 1));
    if (d >= obs - 1e-12) ++hits;
  }
  return double(hits) / double(std::size_t{1} << n);
}

}  // namespace

TEST_CASE("score basics") {
  const Ints g = {1, 0, 1, 1, 0};
  const auto same = score(g, g, 1);
  CHECK(same.accuracy == 1.0);
  CHECK(same.f1 == 1.0);

  const auto neg = score(Ints{0, 0, 0, 0, 0}, g, 1);
  CHECK(neg.recall == 0.0);
  CHECK(neg.f1 == 0.0);
  CHECK(neg.accuracy == doctest::Approx(0.4));

  const auto r = score(Ints{1, 1, 0, 1, 0}, g, 1);
  CHECK(r.tp == 2);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.tn == 1);
  CHECK(r.precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.recall == doctest::Approx(2.0 / 3.0));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0));

  // harmonic mean of a printed precision/recall pair
  const double p = 0.16, rc = 0.72;
  CHECK(2 * p * rc / (p + rc) == doctest::Approx(0.2618).epsilon(1e-3));

  CHECK_THROWS_AS(score(Ints{1}, g, 1), ShapeError);
  CHECK(parse_metric(to_string(Metric::f1_pos)) == Metric::f1_pos);
  CHECK_THROWS(parse_metric("auc"));
}

TEST_CASE("score is invariant to joint reordering") {
  Rng rng(5);
  for (int round = 0; round < 50; ++round) {
    Ints p(40), g(40);
    for (auto& v : p) v = int(uniform_index(rng, 3));
    for (auto& v : g) v = int(uniform_index(rng, 3));
    const auto a = score(p, g, 1);
    std::vector<std::size_t> order(40);
    std::iota(order.begin(), order.end(), 0);
    portable_shuffle(order.begin(), order.end(), rng);
    Ints p2, g2;
    for (auto i : order) {
      p2.push_back(p[i]);
      g2.push_back(g[i]);
    }
    const auto b = score(p2, g2, 1);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.f1 == b.f1);
    CHECK(a.tp == b.tp);
  }
}

TEST_CASE("identical systems give p = 1") {
  const Ints a = {1, 0, 1, 1, 0, 1}, g = {1, 1, 1, 0, 0, 1};
  const auto r = approx_randomization_test(a, a, g, Metric::accuracy, 1, 500, 3);
  CHECK(r.observed_diff == 0.0);
  CHECK(r.p_value == 1.0);
  CHECK_FALSE(r.significant());
}

TEST_CASE("p depends on where the errors are, not only how many") {
  // Both comparisons have accuracies 5/6 vs 2/6.
  const Ints gold = {1, 1, 1, 0, 0, 0};
  const Ints a1 = {1, 1, 1, 0, 0, 1}, b1 = {1, 0, 0, 1, 0, 1};  // errors overlap once
  const Ints a2 = {1, 1, 1, 0, 0, 1}, b2 = {0, 0, 0, 1, 0, 0};  // disjoint errors
  CHECK(score(a1, gold, 1).accuracy == score(a2, gold, 1).accuracy);
  CHECK(score(b1, gold, 1).accuracy == score(b2, gold, 1).accuracy);
  const double e1 = exact_p(a1, b1, gold, Metric::accuracy);
  const double e2 = exact_p(a2, b2, gold, Metric::accuracy);
  CHECK(std::abs(e1 - e2) > 0.1);
  const auto r1 = approx_randomization_test(a1, b1, gold, Metric::accuracy, 1, 10000, 1);
  const auto r2 = approx_randomization_test(a2, b2, gold, Metric::accuracy, 1, 10000, 1);
  CHECK(std::abs(r1.p_value - e1) <= 0.02);
  CHECK(std::abs(r2.p_value - e2) <= 0.02);
}

TEST_CASE("randomization p matches exact enumeration on random small problems") {
  Rng rng(77);
  for (int round = 0; round < 12; ++round) {
    const std::size_t n = 6 + uniform_index(rng, 5);
    Ints a(n), b(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = int(uniform_index(rng, 2));
      a[i] = uniform01(rng) < 0.8 ? g[i] : 1 - g[i];
      b[i] = uniform01(rng) < 0.5 ? g[i] : 1 - g[i];
    }
    for (Metric m : {Metric::accuracy, Metric::f1_pos}) {
      const auto r = approx_randomization_test(a, b, g, m, 1, 10000, std::uint64_t(round));
      CHECK(std::abs(r.p_value - exact_p(a, b, g, m)) <= 0.02);
      CHECK(r.p_value >= 1.0 / 10001.0);
      CHECK(r.p_value <= 1.0);
    }
  }
}

TEST_CASE("randomization test is deterministic and thread independent") {
  Rng rng(8);
  Ints a(200), b(200), g(200);
  for (std::size_t i = 0; i < 200; ++i) {
    g[i] = int(uniform_index(rng, 2));
    a[i] = uniform01(rng) < 0.8 ? g[i] : 1 - g[i];
    b[i] = uniform01(rng) < 0.7 ? g[i] : 1 - g[i];
  }
  const auto one = approx_randomization_test(a, b, g, Metric::f1_pos, 1, 2000, 4, 1);
  const auto four = approx_randomization_test(a, b, g, Metric::f1_pos, 1, 2000, 4, 4);
  CHECK(one.p_value == four.p_value);
  CHECK(one.at_least_as_extreme == four.at_least_as_extreme);
  CHECK(one.rounds == 2000);
  CHECK(one.metric_a == score(a, g, 1).f1);
  CHECK(approx_randomization_test(a, b, g, Metric::f1_pos, 1, 2000, 5).p_value != one.p_value);
}

TEST_CASE("p value helper") {
  const std::vector<double> nulls = {0.0, 0.1, -0.2, 0.3, -0.05};
  CHECK(randomization_p_value(0.2, nulls) == doctest::Approx(3.0 / 6.0));
  CHECK(randomization_p_value(0.5, nulls) == doctest::Approx(1.0 / 6.0));
  CHECK(randomization_p_value(0.0, nulls) == 1.0);
  // a larger observed difference never raises p for the same null draws
  double last = 1.0;
  for (double d = 0.0; d <= 0.4; d += 0.01) {
    const double p = randomization_p_value(d, nulls);
    CHECK(p <= last);
    CHECK(p >= 1.0 / 6.0);
    last = p;
  }
}

TEST_CASE("significance errors") {
  CHECK_THROWS_AS(approx_randomization_test(Ints{1, 0}, Ints{1}, Ints{1, 0}, Metric::accuracy, 1), ShapeError);
  CHECK_THROWS(approx_randomization_test(Ints{1}, Ints{1}, Ints{1}, Metric::accuracy, 1, 0));
}
