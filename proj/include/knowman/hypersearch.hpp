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

#ifndef KNOWMAN_HYPERSEARCH_HPP_
#define KNOWMAN_HYPERSEARCH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "knowman/trainer.hpp"

namespace knowman {

struct IntRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Ranges searched over. batch_size is drawn log-uniformly; every other range
// uniformly. eval_every_k = 0 in the list stands for per-batch evaluation.
struct SearchSpace {
  IntRange batch_size{16, 1024};
  RealRange dropout{0.1, 0.5};
  std::vector<int> n_critic{1, 5, 10, 50};
  RealRange lambda{0.0, 5.0};
  IntRange shared_hidden_size{100, 1000};
  std::vector<double> lr_main{1e-4, 5e-4, 1e-3};
  std::vector<double> lr_d{1e-4, 5e-4, 1e-3};
  IntRange num_f_layers{1, 10};
  IntRange num_c_layers{1, 10};
  IntRange num_d_layers{1, 10};
  std::vector<std::size_t> eval_every_k{0, 10, 50, 100};
};

void validate(const SearchSpace& space);

// Fields of `base` outside the space (epochs, metric, ...) are kept.
TrainConfig sample_config(const SearchSpace& space, std::uint64_t seed,
                          const TrainConfig& base = {});

struct Trial {
  std::size_t index = 0;
  TrainConfig config;
  std::optional<double> metric;  // empty if the trial failed
  std::string error;
  double runtime_s = 0.0;
  std::uint64_t seed = 0;

  bool ok() const { return metric.has_value(); }
};

nlohmann::json to_json(const Trial& trial);

// Proposes the configuration of trial `index` given the trials completed so
// far. Random search ignores the history.
using Proposer = std::function<TrainConfig(std::size_t index, std::span<const Trial> done)>;
// Trains one configuration and returns its validation metric.
using TrainFn = std::function<double(const TrainConfig&)>;

Proposer random_proposer(SearchSpace space, std::uint64_t seed, TrainConfig base = {});

struct SearchOptions {
  unsigned parallelism = 1;
  std::function<void(const Trial&)> on_trial;
};

// Runs `budget` trials and returns them sorted by metric, best first; failed
// trials go last. Ties keep trial order.
std::vector<Trial> run_search(const Proposer& proposer, std::size_t budget, const TrainFn& train_fn,
                              const SearchOptions& options = {});

std::vector<Trial> random_search(const SearchSpace& space, std::size_t budget,
                                 const TrainFn& train_fn, std::uint64_t seed,
                                 const TrainConfig& base = {}, const SearchOptions& options = {});

}  // namespace knowman

#endif  // KNOWMAN_HYPERSEARCH_HPP_
