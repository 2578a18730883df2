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

#include "knowman/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "knowman/error.hpp"
#include "knowman/rng.hpp"

namespace knowman {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

OptimizerConfig TrainConfig::main_optimizer() const {
  OptimizerConfig c;
  c.kind = optimizer_main;
  c.lr = lr_main;
  c.weight_decay = optimizer_main == OptimizerKind::adamw ? weight_decay : 0.0;
  return c;
}

OptimizerConfig TrainConfig::d_optimizer() const {
  OptimizerConfig c;
  c.kind = optimizer_d;
  c.lr = lr_d;
  c.weight_decay = optimizer_d == OptimizerKind::adamw ? weight_decay : 0.0;
  return c;
}

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& msg) { throw SchemaError("invalid config: " + msg); };
  if (!std::isfinite(cfg.lambda) || cfg.lambda < 0.0) fail("lambda must be >= 0");
  if (cfg.n_critic < 0) fail("n_critic must be >= 0");
  if (cfg.batch_size < 2) fail("batch_size must be >= 2 (batchnorm)");
  if (cfg.epochs < 0) fail("epochs must be >= 0");
  if (!(cfg.lr_main > 0.0) || !(cfg.lr_d > 0.0)) fail("learning rates must be > 0");
  if (!(cfg.weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (cfg.shared_hidden_size == 0) fail("shared_hidden_size must be > 0");
  if (cfg.num_f_layers < 0) fail("num_f_layers must be >= 0");
  if (cfg.num_c_layers < 1 || cfg.num_d_layers < 1) fail("num_c_layers and num_d_layers must be >= 1");
  if (cfg.eval_every_k == 0) fail("eval_every_k must be >= 1");
  if (cfg.positive_class < 0) fail("positive_class must be >= 0");
  if (cfg.min_df == 0) fail("min_df must be >= 1");
}

namespace {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::adamw ? "adamw" : "adam"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adamw") return OptimizerKind::adamw;
  throw SchemaError("unknown optimizer '" + s + "'");
}

std::string_view cadence_name(EvalCadence c) {
  return c == EvalCadence::every_k_steps ? "every_k_steps" : "per_batch";
}

EvalCadence parse_cadence(const std::string& s) {
  if (s == "per_batch") return EvalCadence::per_batch;
  if (s == "every_k_steps") return EvalCadence::every_k_steps;
  throw SchemaError("unknown eval cadence '" + s + "'");
}

std::string_view tie_name(const TiePolicy& t) {
  return t.kind == TiePolicy::Kind::majority_random_tie ? "majority_random_tie" : "majority_drop_ties";
}

}  // namespace

json to_json(const TrainConfig& c) {
  return json{
      {"lambda", c.lambda},
      {"n_critic", c.n_critic},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"lr_main", c.lr_main},
      {"lr_d", c.lr_d},
      {"optimizer_main", optimizer_name(c.optimizer_main)},
      {"optimizer_d", optimizer_name(c.optimizer_d)},
      {"weight_decay", c.weight_decay},
      {"dropout", c.dropout},
      {"shared_hidden_size", c.shared_hidden_size},
      {"num_f_layers", c.num_f_layers},
      {"num_c_layers", c.num_c_layers},
      {"num_d_layers", c.num_d_layers},
      {"eval_cadence", cadence_name(c.eval_cadence)},
      {"eval_every_k", c.eval_every_k},
      {"seed", c.seed},
      {"metric", to_string(c.metric)},
      {"positive_class", c.positive_class},
      {"tie_policy", tie_name(c.tie_policy)},
      {"min_df", c.min_df},
  };
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw SchemaError("train config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lambda") c.lambda = value.get<double>();
      else if (key == "n_critic") c.n_critic = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "lr_main") c.lr_main = value.get<double>();
      else if (key == "lr_d") c.lr_d = value.get<double>();
      else if (key == "optimizer_main") c.optimizer_main = parse_optimizer(value.get<std::string>());
      else if (key == "optimizer_d") c.optimizer_d = parse_optimizer(value.get<std::string>());
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "shared_hidden_size") c.shared_hidden_size = value.get<std::size_t>();
      else if (key == "num_f_layers") c.num_f_layers = value.get<int>();
      else if (key == "num_c_layers") c.num_c_layers = value.get<int>();
      else if (key == "num_d_layers") c.num_d_layers = value.get<int>();
      else if (key == "eval_cadence") c.eval_cadence = parse_cadence(value.get<std::string>());
      else if (key == "eval_every_k") c.eval_every_k = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "metric") c.metric = parse_metric(value.get<std::string>());
      else if (key == "positive_class") c.positive_class = value.get<int>();
      else if (key == "tie_policy") {
        const auto s = value.get<std::string>();
        if (s == "majority_drop_ties") c.tie_policy.kind = TiePolicy::Kind::majority_drop_ties;
        else if (s == "majority_random_tie") c.tie_policy.kind = TiePolicy::Kind::majority_random_tie;
        else throw SchemaError("unknown tie policy '" + s + "'");
      } else if (key == "min_df") c.min_df = value.get<std::size_t>();
      else throw SchemaError("unknown config field '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("config field has the wrong type: ") + e.what());
  }
  validate(c);
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed config: ") + e.what(), 0);
  }
  return train_config_from_json(j);
}

void save_train_config(const TrainConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_json(cfg).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Model

std::vector<Param*> KnowManModel::main_params() {
  auto p = fs.params();
  auto q = c.params();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

namespace {

std::vector<LayerSpec> head_specs(std::size_t hidden, std::size_t out, int layers, double dropout) {
  std::vector<LayerSpec> s;
  for (int i = 0; i + 1 < layers; ++i) {
    s.push_back(LayerSpec::dropout(dropout, hidden));
    s.push_back(LayerSpec::dense(hidden, hidden));
    s.push_back(LayerSpec::batchnorm(hidden));
    s.push_back(LayerSpec::relu(hidden));
  }
  s.push_back(LayerSpec::dense(hidden, out));
  s.push_back(LayerSpec::log_softmax(out));
  return s;
}

}  // namespace

KnowManModel build_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.n_classes < 2 || shape.n_lfs == 0 ||
      shape.shared_hidden_size == 0)
    throw ShapeError("model dimensions must be positive");
  if (shape.num_f_layers < 0 || shape.num_c_layers < 1 || shape.num_d_layers < 1)
    throw ShapeError("invalid layer counts");

  KnowManModel m;
  m.shape = shape;
  std::vector<LayerSpec> fs;
  std::size_t width = shape.input_dim;
  if (shape.num_f_layers == 0) {
    fs.push_back(LayerSpec::dropout(0.0, width));
  } else {
    for (int i = 0; i < shape.num_f_layers; ++i) {
      fs.push_back(LayerSpec::dense(width, shape.shared_hidden_size));
      fs.push_back(LayerSpec::relu(shape.shared_hidden_size));
      fs.push_back(LayerSpec::dropout(shape.dropout, shape.shared_hidden_size));
      width = shape.shared_hidden_size;
    }
  }
  m.fs = Network(std::move(fs), derive_seed(seed, "fs"));
  m.c = Network(head_specs(width, static_cast<std::size_t>(shape.n_classes), shape.num_c_layers,
                           shape.dropout),
                derive_seed(seed, "c"));
  m.d = Network(head_specs(width, shape.n_lfs, shape.num_d_layers, shape.dropout),
                derive_seed(seed, "d"));
  return m;
}

KnowManModel build_model(std::size_t input_dim, int n_classes, std::size_t n_lfs,
                         const TrainConfig& cfg, std::uint64_t seed) {
  ModelShape shape;
  shape.input_dim = input_dim;
  shape.n_classes = n_classes;
  shape.n_lfs = n_lfs;
  shape.shared_hidden_size = cfg.shared_hidden_size;
  shape.num_f_layers = cfg.num_f_layers;
  shape.num_c_layers = cfg.num_c_layers;
  shape.num_d_layers = cfg.num_d_layers;
  shape.dropout = cfg.dropout;
  return build_model(shape, seed);
}

// ---------------------------------------------------------------------------
// Data

TrainingSet make_training_set(FeatureMatrix features, const WeakDataset& weak) {
  if (features.size() != weak.n_instances)
    throw ShapeError("feature rows do not match the weakly labelled instances");
  TrainingSet set;
  set.features = std::move(features);
  set.triples = weak.triples;
  set.n_classes = weak.n_classes;
  set.n_lfs = weak.n_lfs;
  return set;
}

TrainingSet instance_level(const TrainingSet& set) {
  TrainingSet out;
  out.features = set.features;
  out.n_classes = set.n_classes;
  out.n_lfs = set.n_lfs;
  std::vector<const Triple*> first(set.features.size(), nullptr);
  for (const auto& t : set.triples)
    if (!first[t.instance] || t.lf < first[t.instance]->lf) first[t.instance] = &t;
  for (const Triple* t : first)
    if (t) out.triples.push_back(*t);
  return out;
}

Matrix densify(const FeatureMatrix& features, std::size_t begin, std::size_t end) {
  Matrix x(end - begin, features.dim);
  for (std::size_t r = begin; r < end; ++r) {
    const auto& row = features.rows[r];
    for (std::size_t k = 0; k < row.nnz(); ++k) x(r - begin, row.indices[k]) = row.values[k];
  }
  return x;
}

Batch make_batch(const FeatureMatrix& features, std::span<const Triple> triples,
                 std::span<const std::size_t> picks) {
  Batch b;
  b.x = Matrix(picks.size(), features.dim);
  for (std::size_t r = 0; r < picks.size(); ++r) {
    const Triple& t = triples[picks[r]];
    const auto& row = features.rows.at(t.instance);
    for (std::size_t k = 0; k < row.nnz(); ++k) b.x(r, row.indices[k]) = row.values[k];
    b.labels.push_back(t.label);
    b.lfs.push_back(t.lf);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Objectives and steps

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

struct Seeds {
  std::uint64_t fs, c, d;
  explicit Seeds(std::uint64_t step_seed)
      : fs(derive_seed(step_seed, "fs")), c(derive_seed(step_seed, "c")), d(derive_seed(step_seed, "d")) {}
};

void require_batch(const Batch& batch) {
  if (batch.size() == 0) throw ShapeError("empty batch");
  if (batch.x.rows != batch.size() || batch.lfs.size() != batch.size())
    throw ShapeError("batch components have different lengths");
}

StepReport run_objectives(KnowManModel& m, const Batch& batch, double lambda,
                          ObjectiveGrads grads, std::uint64_t step_seed, bool training) {
  require_batch(batch);
  const auto start = std::chrono::steady_clock::now();
  const Seeds seeds(step_seed);
  const NetworkMode fs_mode = training ? NetworkMode::train(seeds.fs) : NetworkMode::frozen(seeds.fs);
  const NetworkMode c_mode = training ? NetworkMode::train(seeds.c) : NetworkMode::frozen(seeds.c);
  // d never updates its running statistics outside d_step.
  const NetworkMode d_mode = NetworkMode::frozen(seeds.d);

  const bool want = grads != ObjectiveGrads::none;
  ForwardCache fs_cache, c_cache, d_cache;
  const Matrix h = m.fs.forward(batch.x, fs_mode, want ? &fs_cache : nullptr);
  const Matrix c_out = m.c.forward(h, c_mode, want ? &c_cache : nullptr);
  const Matrix d_out = m.d.forward(h, d_mode, want ? &d_cache : nullptr);
  const NllResult lc = nll_loss(c_out, batch.labels);
  const NllResult ld = nll_loss(d_out, batch.lfs);

  StepReport rep;
  rep.j_c = lc.loss;
  rep.j_d = ld.loss;
  rep.j_fs = lc.loss - lambda * ld.loss;

  const BackwardOptions no_input{true, false};
  switch (grads) {
    case ObjectiveGrads::none:
      break;
    case ObjectiveGrads::combined: {
      m.fs.zero_grad();
      m.c.zero_grad();
      Matrix dh = m.c.backward(c_cache, lc.grad);
      if (lambda != 0.0) {
        // Reversed discriminator gradient; d's own parameters stay untouched.
        const Matrix dh_d = m.d.backward(d_cache, ld.grad, {false, true});
        const double reverse = -lambda;
        for (std::size_t k = 0; k < dh.data.size(); ++k) dh.data[k] += reverse * dh_d.data[k];
      }
      m.fs.backward(fs_cache, dh, no_input);
      break;
    }
    case ObjectiveGrads::classifier_only: {
      m.fs.zero_grad();
      m.c.zero_grad();
      m.fs.backward(fs_cache, m.c.backward(c_cache, lc.grad), no_input);
      break;
    }
    case ObjectiveGrads::discriminator_only: {
      m.fs.zero_grad();
      m.d.zero_grad();
      m.fs.backward(fs_cache, m.d.backward(d_cache, ld.grad), no_input);
      break;
    }
  }
  rep.elapsed_ms = elapsed_ms(start);
  return rep;
}

}  // namespace

StepReport compute_objectives(KnowManModel& model, const Batch& batch, double lambda,
                              ObjectiveGrads grads, std::uint64_t step_seed) {
  return run_objectives(model, batch, lambda, grads, step_seed, false);
}

StepReport d_step(KnowManModel& m, const Batch& batch, const OptimizerConfig& opt_d,
                  std::uint64_t step_seed) {
  require_batch(batch);
  const auto start = std::chrono::steady_clock::now();
  const Seeds seeds(step_seed);
  // fs and c are frozen, buffers included.
  const Matrix h = m.fs.forward(batch.x, NetworkMode::frozen(seeds.fs));
  ForwardCache d_cache;
  const Matrix d_out = m.d.forward(h, NetworkMode::train(seeds.d), &d_cache);
  const NllResult ld = nll_loss(d_out, batch.lfs);
  m.d.zero_grad();
  m.d.backward(d_cache, ld.grad, {true, false});
  optimizer_step(m.d_params(), opt_d);

  StepReport rep;
  rep.j_d = ld.loss;
  rep.j_c = nll_loss(m.c.forward(h, NetworkMode::frozen(seeds.c)), batch.labels).loss;
  rep.j_fs = rep.j_c;
  rep.elapsed_ms = elapsed_ms(start);
  return rep;
}

StepReport main_step(KnowManModel& m, const Batch& batch, const OptimizerConfig& opt_main,
                     double lambda, std::uint64_t step_seed) {
  StepReport rep = run_objectives(m, batch, lambda, ObjectiveGrads::combined, step_seed, true);
  optimizer_step(m.main_params(), opt_main);
  return rep;
}

StepReport feature_step(Network& fs, Network& c, const Batch& batch,
                        const OptimizerConfig& opt_main, std::uint64_t step_seed) {
  if (batch.size() == 0) throw ShapeError("empty batch");
  const auto start = std::chrono::steady_clock::now();
  const Seeds seeds(step_seed);
  ForwardCache fs_cache, c_cache;
  const Matrix h = fs.forward(batch.x, NetworkMode::train(seeds.fs), &fs_cache);
  const Matrix out = c.forward(h, NetworkMode::train(seeds.c), &c_cache);
  const NllResult lc = nll_loss(out, batch.labels);
  fs.zero_grad();
  c.zero_grad();
  fs.backward(fs_cache, c.backward(c_cache, lc.grad), {true, false});
  auto params = fs.params();
  auto cp = c.params();
  params.insert(params.end(), cp.begin(), cp.end());
  optimizer_step(params, opt_main);

  StepReport rep;
  rep.j_c = lc.loss;
  rep.j_fs = lc.loss;
  rep.elapsed_ms = elapsed_ms(start);
  return rep;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(KnowManModel& model, const TrainingSet& data, TrainConfig cfg, Variant variant,
                 TrainerState state)
    : model_(model), data_(data), cfg_(std::move(cfg)), variant_(variant), state_(state) {
  validate(cfg_);
  if (data_.triples.size() < 2) throw SchemaError("training needs at least 2 triples");
  if (data_.features.dim != model_.shape.input_dim)
    throw ShapeError("feature dimension " + std::to_string(data_.features.dim) +
                     " does not match model input " + std::to_string(model_.shape.input_dim));
  if (data_.n_lfs != model_.shape.n_lfs || data_.n_classes != model_.shape.n_classes)
    throw ShapeError("training set label/LF counts do not match the model");

  const std::size_t n = data_.triples.size();
  for (std::size_t b = 0; b < n; b += cfg_.batch_size) batch_bounds_.push_back(b);
  batch_bounds_.push_back(n);
  // A trailing batch of one row cannot be batch-normalised; fold it into the previous one.
  if (batch_bounds_.size() > 2 && n - batch_bounds_[batch_bounds_.size() - 2] == 1)
    batch_bounds_.erase(batch_bounds_.end() - 2);
}

std::vector<std::size_t> Trainer::permutation(std::string_view stream, std::uint64_t epoch) const {
  std::vector<std::size_t> perm(data_.triples.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(cfg_.seed, stream, epoch));
  portable_shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

Batch Trainer::batch_from(std::string_view stream, std::uint64_t index) const {
  const std::uint64_t bpe = batches_per_epoch();
  const auto perm = permutation(stream, index / bpe);
  const std::size_t b = index % bpe;
  const std::span<const std::size_t> picks(perm.data() + batch_bounds_[b],
                                           batch_bounds_[b + 1] - batch_bounds_[b]);
  return make_batch(data_.features, data_.triples, picks);
}

Batch Trainer::main_batch(std::uint64_t step) const { return batch_from("main-epoch", step); }
Batch Trainer::critic_batch(std::uint64_t draw) const { return batch_from("critic-epoch", draw); }

StepReport Trainer::step() {
  if (variant_ == Variant::knowman) {
    const auto opt_d = cfg_.d_optimizer();
    for (int k = 0; k < cfg_.n_critic; ++k) {
      const auto draw = state_.critic_draws++;
      d_step(model_, critic_batch(draw), opt_d, derive_seed(cfg_.seed, "critic-step", draw));
    }
  }
  const auto s = state_.main_steps;
  const Batch batch = main_batch(s);
  const auto seed = derive_seed(cfg_.seed, "main-step", s);
  StepReport rep = variant_ == Variant::knowman
                       ? main_step(model_, batch, cfg_.main_optimizer(), cfg_.lambda, seed)
                       : feature_step(model_.fs, model_.c, batch, cfg_.main_optimizer(), seed);
  rep.step = ++state_.main_steps;
  return rep;
}

// ---------------------------------------------------------------------------
// Inference

namespace {
constexpr std::size_t kPredictChunk = 256;
}

Prediction predict(KnowManModel& model, const FeatureMatrix& features) {
  if (features.dim != model.shape.input_dim)
    throw ShapeError("feature dimension " + std::to_string(features.dim) +
                     " does not match model input " + std::to_string(model.shape.input_dim));
  Prediction p;
  p.log_probs = Matrix(features.size(), static_cast<std::size_t>(model.shape.n_classes));
  for (std::size_t begin = 0; begin < features.size(); begin += kPredictChunk) {
    const std::size_t end = std::min(features.size(), begin + kPredictChunk);
    const Matrix out = model.c.forward(model.fs.forward(densify(features, begin, end), NetworkMode::eval()),
                                       NetworkMode::eval());
    std::copy(out.data.begin(), out.data.end(), p.log_probs.data.begin() + static_cast<std::ptrdiff_t>(begin * out.cols));
  }
  p.classes = argmax_rows(p.log_probs);
  return p;
}

double discriminator_accuracy(KnowManModel& model, const FeatureMatrix& features,
                              std::span<const Triple> triples) {
  if (triples.empty()) return 0.0;
  if (features.dim != model.shape.input_dim) throw ShapeError("feature dimension mismatch");
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < triples.size(); begin += kPredictChunk) {
    const std::size_t end = std::min(triples.size(), begin + kPredictChunk);
    std::vector<std::size_t> picks(end - begin);
    std::iota(picks.begin(), picks.end(), begin);
    const Batch b = make_batch(features, triples, picks);
    const auto pred = argmax_rows(
        model.d.forward(model.fs.forward(b.x, NetworkMode::eval()), NetworkMode::eval()));
    for (std::size_t r = 0; r < pred.size(); ++r) correct += pred[r] == b.lfs[r];
  }
  return static_cast<double>(correct) / static_cast<double>(triples.size());
}

// ---------------------------------------------------------------------------
// Training loop

json to_json(const HistoryRecord& rec) {
  json j{{"step", rec.step}, {"j_c", rec.j_c}, {"j_d", rec.j_d}, {"j_fs", rec.j_fs}};
  j["val_metric"] = rec.val_metric ? json(*rec.val_metric) : json(nullptr);
  return j;
}

TrainResult train(KnowManModel& model, const TrainingSet& data, const TrainConfig& cfg,
                  const TrainOptions& options) {
  validate(cfg);
  TrainResult result;
  auto warn = [&](const std::string& msg) {
    if (options.on_warning) options.on_warning(msg);
  };

  Trainer trainer(model, data, cfg, options.variant);
  const std::uint64_t total = static_cast<std::uint64_t>(cfg.epochs) * trainer.batches_per_epoch();
  const EvalSet* val = options.validation;
  if (val && val->gold.size() != val->features.size())
    throw ShapeError("validation gold labels do not match its feature rows");
  if (!val && total > 0) warn("no validation data: keeping the final model instead of the best checkpoint");

  std::optional<KnowManModel> best;
  for (std::uint64_t s = 0; s < total; ++s) {
    const StepReport rep = trainer.step();
    HistoryRecord rec{rep.step, rep.j_c, rep.j_d, rep.j_fs, std::nullopt};

    const bool due = cfg.eval_cadence == EvalCadence::per_batch || rep.step % cfg.eval_every_k == 0 ||
                     rep.step == total;
    if (val && due) {
      const auto pred = predict(model, val->features);
      const double metric = metric_value(cfg.metric, pred.classes, val->gold, cfg.positive_class);
      rec.val_metric = metric;
      if (!result.best_metric || metric > *result.best_metric) {
        result.best_metric = metric;
        result.best_step = rep.step;
        best = model;
      }
    }
    result.history.push_back(rec);
    if (options.on_record) options.on_record(rec);

    if (options.held_out && rep.step % trainer.batches_per_epoch() == 0)
      result.disc_accuracy.push_back(
          discriminator_accuracy(model, options.held_out->features, options.held_out->triples));
  }

  result.final_state = trainer.state();
  TrainerState saved_state = trainer.state();
  if (best) {
    model = std::move(*best);
    saved_state.main_steps = result.best_step;
    saved_state.critic_draws =
        options.variant == Variant::knowman ? result.best_step * static_cast<std::uint64_t>(cfg.n_critic) : 0;
  } else {
    result.used_final_model = true;
  }
  if (options.checkpoint_path) {
    save_checkpoint(model, *options.checkpoint_path, saved_state);
    result.best_checkpoint = options.checkpoint_path;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[8] = {'K', 'N', 'O', 'W', 'M', 'A', 'N', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated checkpoint");
  return v;
}

std::uint64_t checksum(std::string_view bytes) { return mix64(fnv1a64(bytes)); }

}  // namespace

void save_checkpoint(const KnowManModel& model, const std::filesystem::path& path,
                     const TrainerState& state) {
  std::ostringstream payload(std::ios::binary);
  const ModelShape& s = model.shape;
  put<std::uint64_t>(payload, s.input_dim);
  put<std::int64_t>(payload, s.n_classes);
  put<std::uint64_t>(payload, s.n_lfs);
  put<std::uint64_t>(payload, s.shared_hidden_size);
  put<std::int64_t>(payload, s.num_f_layers);
  put<std::int64_t>(payload, s.num_c_layers);
  put<std::int64_t>(payload, s.num_d_layers);
  put<double>(payload, s.dropout);
  put<std::uint64_t>(payload, state.main_steps);
  put<std::uint64_t>(payload, state.critic_draws);
  model.fs.write(payload);
  model.c.write(payload);
  model.d.write(payload);
  const std::string bytes = payload.str();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, bytes.size());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    put<std::uint64_t>(out, checksum(bytes));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t header = sizeof kCheckpointMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (file.size() < header + sizeof(std::uint64_t)) throw IoError("truncated checkpoint");
  if (std::memcmp(file.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw IoError("not a checkpoint file");
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  std::memcpy(&version, file.data() + sizeof kCheckpointMagic, sizeof version);
  std::memcpy(&size, file.data() + sizeof kCheckpointMagic + sizeof version, sizeof size);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  if (file.size() != header + size + sizeof(std::uint64_t)) throw IoError("truncated checkpoint");
  const std::string_view bytes(file.data() + header, size);
  std::uint64_t stored = 0;
  std::memcpy(&stored, file.data() + header + size, sizeof stored);
  if (stored != checksum(bytes)) throw IoError("checkpoint checksum mismatch");

  std::istringstream payload(std::string(bytes), std::ios::binary);
  Checkpoint ck;
  ModelShape& s = ck.model.shape;
  s.input_dim = get<std::uint64_t>(payload);
  s.n_classes = static_cast<int>(get<std::int64_t>(payload));
  s.n_lfs = get<std::uint64_t>(payload);
  s.shared_hidden_size = get<std::uint64_t>(payload);
  s.num_f_layers = static_cast<int>(get<std::int64_t>(payload));
  s.num_c_layers = static_cast<int>(get<std::int64_t>(payload));
  s.num_d_layers = static_cast<int>(get<std::int64_t>(payload));
  s.dropout = get<double>(payload);
  ck.state.main_steps = get<std::uint64_t>(payload);
  ck.state.critic_draws = get<std::uint64_t>(payload);
  ck.model.fs = Network::read(payload);
  ck.model.c = Network::read(payload);
  ck.model.d = Network::read(payload);

  const auto& m = ck.model;
  if (m.fs.in_dim() != s.input_dim || m.c.in_dim() != m.fs.out_dim() || m.d.in_dim() != m.fs.out_dim() ||
      m.c.out_dim() != static_cast<std::size_t>(s.n_classes) || m.d.out_dim() != s.n_lfs)
    throw IoError("checkpoint networks do not fit the recorded model shape");
  return ck;
}

}  // namespace knowman
