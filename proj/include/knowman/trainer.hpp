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

#ifndef KNOWMAN_TRAINER_HPP_
#define KNOWMAN_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "knowman/eval_stats.hpp"
#include "knowman/lf_engine.hpp"
#include "knowman/nn_core.hpp"
#include "knowman/text_features.hpp"

namespace knowman {

enum class EvalCadence { per_batch, every_k_steps };

// Hyperparameters of one training run. Defaults are the small-corpus
// setting: lambda 2, batch 32, five critic steps, hidden width 700,
// learning rate 1e-4 for both optimizers, one layer per module.
struct TrainConfig {
  double lambda = 2.0;
  int n_critic = 5;
  std::size_t batch_size = 32;
  int epochs = 10;
  double lr_main = 1e-4;
  double lr_d = 1e-4;
  OptimizerKind optimizer_main = OptimizerKind::adam;
  OptimizerKind optimizer_d = OptimizerKind::adam;
  double weight_decay = 0.01;  // adamw only
  double dropout = 0.4;
  std::size_t shared_hidden_size = 700;
  int num_f_layers = 1;
  int num_c_layers = 1;
  int num_d_layers = 1;
  EvalCadence eval_cadence = EvalCadence::per_batch;
  std::size_t eval_every_k = 1;
  std::uint64_t seed = 1;
  Metric metric = Metric::accuracy;
  int positive_class = 1;
  TiePolicy tie_policy;
  std::size_t min_df = 1;

  OptimizerConfig main_optimizer() const;
  OptimizerConfig d_optimizer() const;
};

// Throws SchemaError naming the first violated constraint.
void validate(const TrainConfig& cfg);

nlohmann::json to_json(const TrainConfig& cfg);
// Fields absent from `j` keep their defaults; unknown fields are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const TrainConfig& cfg, const std::filesystem::path& path);

struct ModelShape {
  std::size_t input_dim = 0;
  int n_classes = 2;
  std::size_t n_lfs = 1;
  std::size_t shared_hidden_size = 700;
  int num_f_layers = 1;
  int num_c_layers = 1;
  int num_d_layers = 1;
  double dropout = 0.0;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// Shared feature extractor `fs`, classifier `c` and LF discriminator `d`.
// With num_f_layers == 0 the extractor is the identity, which turns `c` into
// a logistic regression over the input.
struct KnowManModel {
  ModelShape shape;
  Network fs;
  Network c;
  Network d;

  std::size_t feature_width() const { return fs.out_dim(); }
  std::vector<Param*> main_params();
  std::vector<Param*> d_params() { return d.params(); }

  friend bool operator==(const KnowManModel&, const KnowManModel&) = default;
};

// fs = [dense -> relu -> dropout] x num_f_layers;
// c, d = [dropout -> dense -> batchnorm -> relu] x (layers - 1) -> dense -> log_softmax.
KnowManModel build_model(const ModelShape& shape, std::uint64_t seed);
KnowManModel build_model(std::size_t input_dim, int n_classes, std::size_t n_lfs,
                         const TrainConfig& cfg, std::uint64_t seed);

// Vectorised instances plus the triples the objectives sum over.
struct TrainingSet {
  FeatureMatrix features;
  std::vector<Triple> triples;
  int n_classes = 2;
  std::size_t n_lfs = 1;
};

TrainingSet make_training_set(FeatureMatrix features, const WeakDataset& weak);
// One triple per labelled instance (its lowest-id agreeing LF), for baselines
// that train on instances rather than LF matches.
TrainingSet instance_level(const TrainingSet& set);

struct Batch {
  Matrix x;
  std::vector<int> labels;
  std::vector<int> lfs;

  std::size_t size() const { return labels.size(); }
};

Batch make_batch(const FeatureMatrix& features, std::span<const Triple> triples,
                 std::span<const std::size_t> picks);
Matrix densify(const FeatureMatrix& features, std::size_t begin, std::size_t end);

struct StepReport {
  std::uint64_t step = 0;
  double j_c = 0.0;
  double j_d = 0.0;
  double j_fs = 0.0;
  double elapsed_ms = 0.0;
};

enum class ObjectiveGrads {
  none,
  combined,            // fs <- grad(j_c) - lambda * grad(j_d), c <- grad(j_c)
  classifier_only,     // fs, c <- grad(j_c)
  discriminator_only,  // fs, d <- grad(j_d)
};

// Evaluates j_c, j_d and j_fs = j_c - lambda * j_d on a batch. Dropout masks
// are drawn from step_seed; batchnorm statistics are read but never updated.
// Gradients (when requested) are written into freshly zeroed Param::grad of
// the networks involved.
StepReport compute_objectives(KnowManModel& model, const Batch& batch, double lambda,
                              ObjectiveGrads grads, std::uint64_t step_seed);

// One discriminator update; only d changes.
StepReport d_step(KnowManModel& model, const Batch& batch, const OptimizerConfig& opt_d,
                  std::uint64_t step_seed);
// One update of fs and c descending j_fs; d is used forward-only.
StepReport main_step(KnowManModel& model, const Batch& batch, const OptimizerConfig& opt_main,
                     double lambda, std::uint64_t step_seed);
// Plain classifier update of fs and c without any discriminator.
StepReport feature_step(Network& fs, Network& c, const Batch& batch,
                        const OptimizerConfig& opt_main, std::uint64_t step_seed);

struct TrainerState {
  std::uint64_t main_steps = 0;
  std::uint64_t critic_draws = 0;

  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

enum class Variant { knowman, feature };

// Batch scheduling and the alternating update loop. Main batches walk a
// seed-shuffled permutation of the triples epoch by epoch; critic batches come
// from an independent endless stream of shuffled epochs, so the main batch
// order does not depend on n_critic.
class Trainer {
 public:
  Trainer(KnowManModel& model, const TrainingSet& data, TrainConfig cfg,
          Variant variant = Variant::knowman, TrainerState state = {});

  // n_critic discriminator steps followed by one main step.
  StepReport step();

  std::size_t batches_per_epoch() const { return batch_bounds_.size() - 1; }
  std::uint64_t epoch() const { return state_.main_steps / batches_per_epoch(); }
  const TrainerState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }

  Batch main_batch(std::uint64_t step) const;
  Batch critic_batch(std::uint64_t draw) const;

 private:
  std::vector<std::size_t> permutation(std::string_view stream, std::uint64_t epoch) const;
  Batch batch_from(std::string_view stream, std::uint64_t index) const;

  KnowManModel& model_;
  const TrainingSet& data_;
  TrainConfig cfg_;
  Variant variant_;
  TrainerState state_;
  std::vector<std::size_t> batch_bounds_;
};

struct Prediction {
  std::vector<int> classes;
  Matrix log_probs;
};

// Eval mode: dropout off, batchnorm running statistics, d unused.
Prediction predict(KnowManModel& model, const FeatureMatrix& features);
// Fraction of triples whose LF is the discriminator's argmax (eval mode).
double discriminator_accuracy(KnowManModel& model, const FeatureMatrix& features,
                              std::span<const Triple> triples);

struct EvalSet {
  FeatureMatrix features;
  std::vector<int> gold;
};

struct HistoryRecord {
  std::uint64_t step = 0;
  double j_c = 0.0;
  double j_d = 0.0;
  double j_fs = 0.0;
  std::optional<double> val_metric;
};

nlohmann::json to_json(const HistoryRecord& rec);

struct TrainOptions {
  Variant variant = Variant::knowman;
  const EvalSet* validation = nullptr;
  const TrainingSet* held_out = nullptr;  // triples for discriminator accuracy
  std::optional<std::filesystem::path> checkpoint_path;
  std::function<void(const HistoryRecord&)> on_record;
  std::function<void(const std::string&)> on_warning;
};

struct TrainResult {
  std::vector<HistoryRecord> history;
  std::vector<double> disc_accuracy;  // per epoch, on held-out triples
  std::optional<double> best_metric;
  std::uint64_t best_step = 0;
  bool used_final_model = false;
  std::optional<std::filesystem::path> best_checkpoint;
  TrainerState final_state;
};

// Runs cfg.epochs epochs. With validation data the model is evaluated per
// cfg.eval_cadence and left holding the best-scoring parameters (ties keep
// the earlier one); without it the final model is kept and a warning issued.
TrainResult train(KnowManModel& model, const TrainingSet& data, const TrainConfig& cfg,
                  const TrainOptions& options = {});

struct Checkpoint {
  KnowManModel model;
  TrainerState state;
};

// Binary, versioned, checksummed. Written to a temporary file and renamed so
// an existing checkpoint is never left half-written.
void save_checkpoint(const KnowManModel& model, const std::filesystem::path& path,
                     const TrainerState& state = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace knowman

#endif  // KNOWMAN_TRAINER_HPP_
