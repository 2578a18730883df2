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

#ifndef KNOWMAN_EVAL_STATS_HPP_
#define KNOWMAN_EVAL_STATS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace knowman {

enum class Metric { accuracy, f1_pos };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);

// Accuracy plus precision, recall and F1 of one designated positive class.
// F1 is 2PR/(P+R), or 0 when P+R = 0.
struct EvalReport {
  std::size_t n = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  int positive_class = 1;
};

EvalReport score(std::span<const int> preds, std::span<const int> golds, int positive_class);
double metric_value(Metric metric, std::span<const int> preds, std::span<const int> golds,
                    int positive_class);

struct SignificanceResult {
  double metric_a = 0.0;
  double metric_b = 0.0;
  double observed_diff = 0.0;  // metric_a - metric_b
  double p_value = 1.0;
  std::size_t rounds = 0;
  std::uint64_t seed = 0;
  std::size_t at_least_as_extreme = 0;

  bool significant(double alpha = 0.05) const { return p_value < alpha; }
};

// Add-one p value: (#{|d| >= |observed|} + 1) / (R + 1).
double randomization_p_value(double observed_diff, std::span<const double> null_diffs);

// Paired approximate randomization: every round swaps preds_a[i] and
// preds_b[i] independently with probability 1/2 and recomputes the metric
// difference. Round r draws from its own seed derived from (seed, r), so the
// result does not depend on how rounds are scheduled.
SignificanceResult approx_randomization_test(std::span<const int> preds_a,
                                             std::span<const int> preds_b,
                                             std::span<const int> golds, Metric metric,
                                             int positive_class, std::size_t rounds = 10000,
                                             std::uint64_t seed = 0, unsigned threads = 1);

}  // namespace knowman

#endif  // KNOWMAN_EVAL_STATS_HPP_
