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

#include "knowman/hypersearch.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "knowman/error.hpp"
#include "knowman/rng.hpp"

namespace knowman {
namespace {

std::int64_t draw_int(Rng& rng, IntRange r) {
  return r.lo + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(r.hi - r.lo + 1)));
}

double draw_real(Rng& rng, RealRange r) { return r.lo + (r.hi - r.lo) * uniform01(rng); }

std::int64_t draw_log_int(Rng& rng, IntRange r) {
  const double lo = std::log(static_cast<double>(r.lo));
  const double hi = std::log(static_cast<double>(r.hi) + 1.0);
  const auto v = static_cast<std::int64_t>(std::floor(std::exp(lo + (hi - lo) * uniform01(rng))));
  return std::clamp(v, r.lo, r.hi);
}

template <typename T>
T draw_choice(Rng& rng, const std::vector<T>& options) {
  return options[uniform_index(rng, options.size())];
}

}  // namespace

void validate(const SearchSpace& s) {
  auto bad = [](const std::string& what) { throw SchemaError("invalid search space: " + what); };
  if (s.batch_size.lo < 2 || s.batch_size.hi < s.batch_size.lo) bad("batch_size");
  if (!(s.dropout.lo >= 0.0 && s.dropout.hi < 1.0 && s.dropout.lo <= s.dropout.hi)) bad("dropout");
  if (s.n_critic.empty() || std::any_of(s.n_critic.begin(), s.n_critic.end(), [](int v) { return v < 0; }))
    bad("n_critic");
  if (!(s.lambda.lo >= 0.0 && s.lambda.lo <= s.lambda.hi)) bad("lambda");
  if (s.shared_hidden_size.lo < 1 || s.shared_hidden_size.hi < s.shared_hidden_size.lo) bad("shared_hidden_size");
  auto lrs_ok = [](const std::vector<double>& v) {
    return !v.empty() && std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
  };
  if (!lrs_ok(s.lr_main) || !lrs_ok(s.lr_d)) bad("learning rates");
  for (const auto* r : {&s.num_f_layers, &s.num_c_layers, &s.num_d_layers})
    if (r->lo < 1 || r->hi < r->lo) bad("layer counts");
  if (s.eval_every_k.empty()) bad("eval_every_k");
}

TrainConfig sample_config(const SearchSpace& space, std::uint64_t seed, const TrainConfig& base) {
  validate(space);
  TrainConfig c = base;
  // One stream per field: adding a field never shifts the others' draws.
  auto rng_for = [&](std::string_view field) { return Rng(derive_seed(seed, field)); };
  Rng r1 = rng_for("batch_size");
  c.batch_size = static_cast<std::size_t>(draw_log_int(r1, space.batch_size));
  Rng r2 = rng_for("dropout");
  c.dropout = draw_real(r2, space.dropout);
  Rng r3 = rng_for("n_critic");
  c.n_critic = draw_choice(r3, space.n_critic);
  Rng r4 = rng_for("lambda");
  c.lambda = draw_real(r4, space.lambda);
  Rng r5 = rng_for("shared_hidden_size");
  c.shared_hidden_size = static_cast<std::size_t>(draw_int(r5, space.shared_hidden_size));
  Rng r6 = rng_for("lr_main");
  c.lr_main = draw_choice(r6, space.lr_main);
  Rng r7 = rng_for("lr_d");
  c.lr_d = draw_choice(r7, space.lr_d);
  Rng r8 = rng_for("num_f_layers");
  c.num_f_layers = static_cast<int>(draw_int(r8, space.num_f_layers));
  Rng r9 = rng_for("num_c_layers");
  c.num_c_layers = static_cast<int>(draw_int(r9, space.num_c_layers));
  Rng r10 = rng_for("num_d_layers");
  c.num_d_layers = static_cast<int>(draw_int(r10, space.num_d_layers));
  Rng r11 = rng_for("eval_every_k");
  const std::size_t k = draw_choice(r11, space.eval_every_k);
  c.eval_cadence = k == 0 ? EvalCadence::per_batch : EvalCadence::every_k_steps;
  c.eval_every_k = k == 0 ? 1 : k;
  c.seed = derive_seed(seed, "train-seed");
  validate(c);
  return c;
}

nlohmann::json to_json(const Trial& t) {
  nlohmann::json j{{"trial", t.index},
                   {"config", to_json(t.config)},
                   {"runtime_s", t.runtime_s},
                   {"seed", t.seed}};
  j["metric"] = t.metric ? nlohmann::json(*t.metric) : nlohmann::json(nullptr);
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

Proposer random_proposer(SearchSpace space, std::uint64_t seed, TrainConfig base) {
  validate(space);
  return [space = std::move(space), seed, base = std::move(base)](std::size_t index, std::span<const Trial>) {
    return sample_config(space, derive_seed(seed, "trial", index), base);
  };
}

std::vector<Trial> run_search(const Proposer& proposer, std::size_t budget, const TrainFn& train_fn,
                              const SearchOptions& options) {
  if (budget == 0) throw SchemaError("search budget must be at least 1");
  std::vector<Trial> trials(budget);
  std::mutex mu;
  std::vector<Trial> done;  // completed so far, for history-aware proposers

  auto run_one = [&](std::size_t i) {
    Trial t;
    t.index = i;
    {
      std::lock_guard lock(mu);
      t.config = proposer(i, done);
    }
    t.seed = t.config.seed;
    const auto start = std::chrono::steady_clock::now();
    try {
      t.metric = train_fn(t.config);
    } catch (const std::exception& e) {
      t.error = e.what();
    }
    t.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::lock_guard lock(mu);
    done.push_back(t);
    trials[i] = t;
    if (options.on_trial) options.on_trial(t);
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.parallelism, static_cast<unsigned>(budget)));
  if (workers == 1) {
    for (std::size_t i = 0; i < budget; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < budget; i = next++) run_one(i);
      });
    for (auto& th : pool) th.join();
  }

  std::stable_sort(trials.begin(), trials.end(), [](const Trial& a, const Trial& b) {
    if (a.ok() != b.ok()) return a.ok();
    if (!a.ok()) return false;
    return *a.metric > *b.metric;
  });
  return trials;
}

std::vector<Trial> random_search(const SearchSpace& space, std::size_t budget, const TrainFn& train_fn,
                                 std::uint64_t seed, const TrainConfig& base,
                                 const SearchOptions& options) {
  return run_search(random_proposer(space, seed, base), budget, train_fn, options);
}

}  // namespace knowman
