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

#include "knowman/eval_stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "knowman/error.hpp"
#include "knowman/rng.hpp"

namespace knowman {
namespace {

// Differences are ratios of small integers; this absorbs rounding when
// comparing a permuted difference against the observed one.
constexpr double kTieTolerance = 1e-12;

}  // namespace

std::string_view to_string(Metric metric) {
  return metric == Metric::f1_pos ? "f1_pos" : "accuracy";
}

Metric parse_metric(std::string_view name) {
  if (name == "accuracy") return Metric::accuracy;
  if (name == "f1_pos") return Metric::f1_pos;
  throw SchemaError("unknown metric '" + std::string(name) + "'");
}

EvalReport score(std::span<const int> preds, std::span<const int> golds, int positive_class) {
  if (preds.size() != golds.size())
    throw ShapeError("score: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(golds.size()) + " gold labels");
  if (preds.empty()) throw ShapeError("score: empty input");
  EvalReport r;
  r.n = preds.size();
  r.positive_class = positive_class;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool pp = preds[i] == positive_class, gp = golds[i] == positive_class;
    correct += preds[i] == golds[i];
    if (pp && gp) ++r.tp;
    else if (pp) ++r.fp;
    else if (gp) ++r.fn;
    else ++r.tn;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  r.precision = r.tp + r.fp ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

double metric_value(Metric metric, std::span<const int> preds, std::span<const int> golds,
                    int positive_class) {
  const auto r = score(preds, golds, positive_class);
  return metric == Metric::f1_pos ? r.f1 : r.accuracy;
}

double randomization_p_value(double observed_diff, std::span<const double> null_diffs) {
  const double obs = std::abs(observed_diff);
  const auto extreme = std::count_if(null_diffs.begin(), null_diffs.end(), [&](double d) {
    return std::abs(d) >= obs - kTieTolerance;
  });
  return (static_cast<double>(extreme) + 1.0) / (static_cast<double>(null_diffs.size()) + 1.0);
}

SignificanceResult approx_randomization_test(std::span<const int> preds_a,
                                             std::span<const int> preds_b,
                                             std::span<const int> golds, Metric metric,
                                             int positive_class, std::size_t rounds,
                                             std::uint64_t seed, unsigned threads) {
  if (preds_a.size() != golds.size() || preds_b.size() != golds.size())
    throw ShapeError("approx_randomization_test: sequences are not aligned");
  if (rounds == 0) throw SchemaError("approx_randomization_test: rounds must be positive");

  SignificanceResult res;
  res.rounds = rounds;
  res.seed = seed;
  res.metric_a = metric_value(metric, preds_a, golds, positive_class);
  res.metric_b = metric_value(metric, preds_b, golds, positive_class);
  res.observed_diff = res.metric_a - res.metric_b;

  std::vector<double> null_diffs(rounds);
  auto run = [&](std::size_t begin, std::size_t end) {
    std::vector<int> a(preds_a.begin(), preds_a.end());
    std::vector<int> b(preds_b.begin(), preds_b.end());
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng(derive_seed(seed, "ar-round", r));
      for (std::size_t i = 0; i < golds.size(); ++i) {
        const bool swap = (rng() >> 63) != 0;
        a[i] = swap ? preds_b[i] : preds_a[i];
        b[i] = swap ? preds_a[i] : preds_b[i];
      }
      null_diffs[r] = metric_value(metric, a, golds, positive_class) -
                      metric_value(metric, b, golds, positive_class);
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(rounds)));
  if (threads == 1) {
    run(0, rounds);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (rounds + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk, end = std::min(rounds, begin + chunk);
      if (begin < end) pool.emplace_back(run, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  res.p_value = randomization_p_value(res.observed_diff, null_diffs);
  res.at_least_as_extreme =
      static_cast<std::size_t>(std::llround(res.p_value * static_cast<double>(rounds + 1))) - 1;
  return res;
}

}  // namespace knowman
