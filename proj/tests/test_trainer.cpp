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
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "doctest.h"
#include "knowman/dataset_io.hpp"
#include "knowman/error.hpp"
#include "knowman/lf_engine.hpp"
#include "knowman/rng.hpp"
#include "knowman/text_features.hpp"
#include "knowman/trainer.hpp"

using namespace knowman;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  SynthCorpora data;
  Vocabulary vocab;
  TrainingSet set;
  EvalSet test;
};

Fixture make_fixture(std::size_t n_train = 120, std::uint64_t seed = 3, bool strip = true, double leak = 0.9) {
  SynthSpec spec;
  spec.n_train = n_train;
  spec.n_test = 80;
  spec.noise_vocab_size = 40;
  spec.seed = seed;
  spec.strip_lf_tokens_in_test = strip;
  spec.lf_leak_prob = leak;
  Fixture f;
  f.data = synth_generate(spec);
  const auto lfs = compile_lfs(f.data.lfs, f.data.train.label_names);
  const auto weak = resolve_weak_labels(apply_lfs(f.data.train, lfs), lfs, 2);
  f.vocab = fit_vectorizer(f.data.train);
  f.set = make_training_set(vectorize(f.data.train, f.vocab), weak);
  f.test.features = vectorize(f.data.test, f.vocab);
  for (const auto& inst : f.data.test.instances) f.test.gold.push_back(*inst.gold_label);
  return f;
}

TrainConfig small_config() {
  TrainConfig c;
  c.shared_hidden_size = 16;
  c.batch_size = 16;
  c.n_critic = 2;
  c.epochs = 2;
  c.lr_main = 1e-3;
  c.lr_d = 1e-3;
  c.dropout = 0.3;
  c.num_c_layers = 2;
  c.num_d_layers = 2;
  c.seed = 11;
  return c;
}

KnowManModel model_for(const Fixture& f, const TrainConfig& c, std::uint64_t seed = 5) {
  return build_model(f.set.features.dim, f.set.n_classes, f.set.n_lfs, c, seed);
}

Batch first_batch(const Fixture& f, std::size_t n = 16, std::size_t offset = 0) {
  std::vector<std::size_t> picks(n);
  for (std::size_t i = 0; i < n; ++i) picks[i] = (offset + i) % f.set.triples.size();
  return make_batch(f.set.features, f.set.triples, picks);
}

std::vector<std::vector<double>> grads_of(const Network& net) {
  std::vector<std::vector<double>> g;
  for (const Param* p : net.params()) g.push_back(p->grad);
  return g;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool bitwise_equal(const Network& a, const Network& b) {
  const auto& la = a.layers();
  const auto& lb = b.layers();
  if (la.size() != lb.size()) return false;
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (!bitwise_equal(la[i].weight.value, lb[i].weight.value)) return false;
    if (!bitwise_equal(la[i].bias.value, lb[i].bias.value)) return false;
    if (!bitwise_equal(la[i].running_mean, lb[i].running_mean)) return false;
    if (!bitwise_equal(la[i].running_var, lb[i].running_var)) return false;
  }
  return true;
}

// Equality of everything a checkpoint stores; gradients are scratch space.
bool same_state(KnowManModel a, KnowManModel b) {
  for (auto* m : {&a, &b}) {
    m->fs.zero_grad();
    m->c.zero_grad();
    m->d.zero_grad();
  }
  return a == b;
}

fs::path temp_path(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "knowman_test_trainer";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("model construction") {
  TrainConfig c = small_config();
  const auto m = build_model(50, 2, 10, c, 1);
  CHECK(m.d.out_dim() == 10);
  CHECK(m.c.out_dim() == 2);
  CHECK(m.fs.out_dim() == 16);
  CHECK(m.feature_width() == 16);
  CHECK(build_model(50, 2, 10, c, 1) == m);
  CHECK_FALSE(build_model(50, 2, 10, c, 2) == m);

  // [dropout, dense, batchnorm, relu] then dense, log_softmax
  const auto specs = m.c.specs();
  REQUIRE(specs.size() == 6);
  CHECK(specs[0].kind == LayerKind::dropout);
  CHECK(specs[2].kind == LayerKind::batchnorm);
  CHECK(specs[5].kind == LayerKind::log_softmax);
  const auto fspecs = m.fs.specs();
  REQUIRE(fspecs.size() == 3);
  CHECK(fspecs[0].kind == LayerKind::dense);
  CHECK(fspecs[1].kind == LayerKind::relu);
  CHECK(fspecs[2].kind == LayerKind::dropout);

  c.num_f_layers = 0;
  auto lin = build_model(50, 2, 10, c, 1);
  CHECK(lin.feature_width() == 50);
  Matrix x(3, 50, 0.25);
  CHECK(lin.fs.forward(x, NetworkMode::train(1)) == x);

  CHECK_THROWS_AS(build_model(0, 2, 10, c, 1), ShapeError);
  CHECK_THROWS_AS(build_model(5, 1, 10, c, 1), ShapeError);
}

TEST_CASE("objective identity on random batches") {
  const auto f = make_fixture();
  auto m = model_for(f, small_config());
  Rng rng(1);
  for (int i = 0; i < 30; ++i) {
    const double lambda = 5.0 * uniform01(rng);
    const auto b = first_batch(f, 8 + uniform_index(rng, 20), uniform_index(rng, 100));
    const auto r = compute_objectives(m, b, lambda, ObjectiveGrads::none, rng());
    CHECK(std::abs(r.j_fs - (r.j_c - lambda * r.j_d)) <= 1e-12);
    const auto z = compute_objectives(m, b, 0.0, ObjectiveGrads::none, 7);
    CHECK(z.j_fs == z.j_c);
  }
  CHECK_THROWS_AS(compute_objectives(m, Batch{}, 1.0, ObjectiveGrads::none, 0), ShapeError);
}

TEST_CASE("combined gradient equals the two single-objective passes") {
  const auto f = make_fixture();
  auto m = model_for(f, small_config());
  const auto b = first_batch(f, 24);
  for (double lambda : {0.0, 0.7, 2.0, 5.0}) {
    compute_objectives(m, b, lambda, ObjectiveGrads::classifier_only, 99);
    const auto gc_fs = grads_of(m.fs), gc_c = grads_of(m.c);
    compute_objectives(m, b, lambda, ObjectiveGrads::discriminator_only, 99);
    const auto gd_fs = grads_of(m.fs);
    const auto d_before = grads_of(m.d);
    compute_objectives(m, b, lambda, ObjectiveGrads::combined, 99);
    const auto g_fs = grads_of(m.fs), g_c = grads_of(m.c);
    for (std::size_t p = 0; p < g_fs.size(); ++p)
      for (std::size_t k = 0; k < g_fs[p].size(); ++k)
        CHECK(std::abs(g_fs[p][k] - (gc_fs[p][k] - lambda * gd_fs[p][k])) <= 1e-10);
    for (std::size_t p = 0; p < g_c.size(); ++p) CHECK(g_c[p] == gc_c[p]);
    CHECK(grads_of(m.d) == d_before);
  }
}

TEST_CASE("main step applies the combined gradient") {
  const auto f = make_fixture();
  const auto cfg = small_config();
  auto m = model_for(f, cfg);
  const auto b = first_batch(f, 20);
  auto oracle = m;
  compute_objectives(oracle, b, 1.5, ObjectiveGrads::classifier_only, 4);
  const auto gc = grads_of(oracle.fs);
  compute_objectives(oracle, b, 1.5, ObjectiveGrads::discriminator_only, 4);
  const auto gd = grads_of(oracle.fs);

  main_step(m, b, cfg.main_optimizer(), 1.5, 4);
  const auto g = grads_of(m.fs);
  for (std::size_t p = 0; p < g.size(); ++p)
    for (std::size_t k = 0; k < g[p].size(); ++k) CHECK(std::abs(g[p][k] - (gc[p][k] - 1.5 * gd[p][k])) <= 1e-10);
}

TEST_CASE("discriminator and main steps respect the freeze") {
  const auto f = make_fixture();
  const auto cfg = small_config();
  auto m = model_for(f, cfg);
  Rng rng(2);
  for (int s = 0; s < 50; ++s) {
    const auto b = first_batch(f, 16, uniform_index(rng, 200));
    const Network fs0 = m.fs, c0 = m.c, d0 = m.d;
    d_step(m, b, cfg.d_optimizer(), rng());
    CHECK(bitwise_equal(m.fs, fs0));
    CHECK(bitwise_equal(m.c, c0));
    CHECK_FALSE(bitwise_equal(m.d, d0));

    const Network d1 = m.d;
    main_step(m, b, cfg.main_optimizer(), 2.0, rng());
    CHECK(bitwise_equal(m.d, d1));
    CHECK_FALSE(bitwise_equal(m.fs, fs0));
  }
}

TEST_CASE("repeated discriminator steps on a fixed batch reduce its loss") {
  const auto f = make_fixture();
  auto cfg = small_config();
  cfg.dropout = 0.0;
  cfg.num_d_layers = 1;
  auto m = model_for(f, cfg);
  const auto b = first_batch(f, 32);
  auto opt = cfg.d_optimizer();
  opt.lr = 1e-3;
  double last = d_step(m, b, opt, 0).j_d;
  for (int s = 1; s < 50; ++s) {
    const double j = d_step(m, b, opt, std::uint64_t(s)).j_d;
    CHECK(j <= last);
    last = j;
  }
  CHECK_THROWS_AS(d_step(m, first_batch(f, 1), opt, 0), ShapeError);
}

TEST_CASE("zero critic steps never touch the discriminator") {
  const auto f = make_fixture();
  auto cfg = small_config();
  cfg.n_critic = 0;
  auto m = model_for(f, cfg);
  const Network d0 = m.d;
  Trainer t(m, f.set, cfg);
  for (int s = 0; s < 10; ++s) t.step();
  CHECK(bitwise_equal(m.d, d0));
  CHECK(t.state().critic_draws == 0);
}

TEST_CASE("lambda zero reproduces the feature baseline bitwise") {
  const auto f = make_fixture();
  auto cfg = small_config();
  cfg.lambda = 0.0;
  auto a = model_for(f, cfg), b = model_for(f, cfg);
  Trainer ta(a, f.set, cfg, Variant::knowman);
  Trainer tb(b, f.set, cfg, Variant::feature);
  for (int s = 0; s < 200; ++s) {
    const auto ra = ta.step(), rb = tb.step();
    CHECK(std::memcmp(&ra.j_c, &rb.j_c, sizeof(double)) == 0);
  }
  CHECK(bitwise_equal(a.fs, b.fs));
  CHECK(bitwise_equal(a.c, b.c));
  CHECK_FALSE(bitwise_equal(a.d, b.d));  // only the knowman run trained d
}

TEST_CASE("batch schedule") {
  const auto f = make_fixture();
  auto cfg = small_config();
  auto m = model_for(f, cfg);
  const std::size_t n = f.set.triples.size();
  Trainer t(m, f.set, cfg);
  CHECK(t.batches_per_epoch() == (n + cfg.batch_size - 1) / cfg.batch_size - (n % cfg.batch_size == 1 ? 1 : 0));

  // one epoch of main batches covers every triple once
  std::multiset<std::pair<int, int>> seen, all;
  std::size_t rows = 0;
  for (std::uint64_t s = 0; s < t.batches_per_epoch(); ++s) {
    const auto b = t.main_batch(s);
    CHECK(b.size() >= 2);
    rows += b.size();
    for (std::size_t r = 0; r < b.size(); ++r) seen.insert({b.labels[r], b.lfs[r]});
  }
  for (const auto& tr : f.set.triples) all.insert({tr.label, tr.lf});
  CHECK(rows == n);
  CHECK(seen == all);

  // epochs reshuffle; same seed same order
  Trainer t2(m, f.set, cfg);
  CHECK(t.main_batch(0).x == t2.main_batch(0).x);
  CHECK_FALSE(t.main_batch(0).x == t.main_batch(t.batches_per_epoch()).x);
  CHECK_FALSE(t.main_batch(0).x == t.critic_batch(0).x);

  // main order does not depend on n_critic
  auto cfg5 = cfg;
  cfg5.n_critic = 5;
  Trainer t5(m, f.set, cfg5);
  for (std::uint64_t s = 0; s < 5; ++s) CHECK(t5.main_batch(s).x == t.main_batch(s).x);

  // a trailing batch of one row is merged
  TrainingSet odd = f.set;
  odd.triples.resize(33);
  auto c16 = cfg;
  c16.batch_size = 16;
  Trainer to(m, odd, c16);
  CHECK(to.batches_per_epoch() == 2);
  CHECK(to.main_batch(1).size() == 17);
}

TEST_CASE("training loop bookkeeping") {
  const auto f = make_fixture();
  auto cfg = small_config();

  SUBCASE("zero epochs") {
    cfg.epochs = 0;
    auto m = model_for(f, cfg);
    const auto init = m;
    const auto r = train(m, f.set, cfg);
    CHECK(r.history.empty());
    CHECK(m == init);
  }
  SUBCASE("best checkpoint is the history maximum") {
    auto m = model_for(f, cfg);
    TrainOptions o;
    o.validation = &f.test;
    std::size_t records = 0;
    o.on_record = [&](const HistoryRecord&) { ++records; };
    const auto r = train(m, f.set, cfg, o);
    Trainer probe(m, f.set, cfg);
    CHECK(r.history.size() == cfg.epochs * probe.batches_per_epoch());
    CHECK(records == r.history.size());
    double best = -1;
    std::uint64_t best_step = 0;
    for (const auto& h : r.history) {
      REQUIRE(h.val_metric.has_value());
      if (*h.val_metric > best) {
        best = *h.val_metric;
        best_step = h.step;
      }
    }
    CHECK(r.best_metric == best);
    CHECK(r.best_step == best_step);
    CHECK_FALSE(r.used_final_model);
    const auto pred = predict(m, f.test.features);
    CHECK(metric_value(cfg.metric, pred.classes, f.test.gold, 1) == best);
  }
  SUBCASE("every k steps cadence") {
    cfg.eval_cadence = EvalCadence::every_k_steps;
    cfg.eval_every_k = 4;
    auto m = model_for(f, cfg);
    TrainOptions o;
    o.validation = &f.test;
    const auto r = train(m, f.set, cfg, o);
    for (const auto& h : r.history)
      CHECK(h.val_metric.has_value() == (h.step % 4 == 0 || h.step == r.history.size()));
  }
  SUBCASE("no validation keeps the final model and warns") {
    auto m = model_for(f, cfg);
    TrainOptions o;
    std::vector<std::string> warnings;
    o.on_warning = [&](const std::string& w) { warnings.push_back(w); };
    o.held_out = &f.set;
    const auto r = train(m, f.set, cfg, o);
    CHECK(r.used_final_model);
    CHECK(warnings.size() == 1);
    CHECK(r.disc_accuracy.size() == std::size_t(cfg.epochs));
    CHECK(r.disc_accuracy.back() == discriminator_accuracy(m, f.set.features, f.set.triples));
  }
}

TEST_CASE("prediction invariances") {
  const auto f = make_fixture();
  auto cfg = small_config();
  auto m = model_for(f, cfg);
  train(m, f.set, cfg);
  const auto p = predict(m, f.test.features);
  CHECK(p.classes == argmax_rows(p.log_probs));

  FeatureMatrix dup = f.test.features;
  dup.rows.push_back(dup.rows[3]);
  dup.rows.insert(dup.rows.begin(), dup.rows[7]);
  const auto q = predict(m, dup);
  CHECK(q.log_probs.row(0)[0] == p.log_probs.row(7)[0]);
  CHECK(q.classes.back() == p.classes[3]);
  for (std::size_t i = 0; i < p.classes.size(); ++i) CHECK(q.classes[i + 1] == p.classes[i]);

  Matrix shifted = p.log_probs;
  for (std::size_t r = 0; r < shifted.rows; ++r)
    for (double& v : shifted.row(r)) v += double(r) * 3.5 - 40.0;
  CHECK(argmax_rows(shifted) == p.classes);

  FeatureMatrix wrong = f.test.features;
  wrong.dim += 1;
  CHECK_THROWS_AS(predict(m, wrong), ShapeError);
}

TEST_CASE("separable task is learned perfectly") {
  // keywords kept in test: the LF keyword decides the class
  const auto f = make_fixture(200, 4, false, 1.0);
  auto cfg = small_config();
  cfg.epochs = 10;
  cfg.lambda = 0.5;
  for (Variant v : {Variant::knowman, Variant::feature}) {
    auto m = model_for(f, cfg);
    TrainOptions o;
    o.variant = v;
    train(m, f.set, cfg, o);
    const auto p = predict(m, f.test.features);
    INFO("variant " << int(v));
    CHECK(score(p.classes, f.test.gold, 1).accuracy == 1.0);
  }
}

TEST_CASE("checkpoints") {
  const auto f = make_fixture();
  auto cfg = small_config();
  auto m = model_for(f, cfg);
  Trainer t(m, f.set, cfg);
  for (int s = 0; s < 10; ++s) t.step();
  const auto path = temp_path("model.ckpt");
  save_checkpoint(m, path, t.state());

  const auto ck = load_checkpoint(path);
  CHECK(same_state(ck.model, m));
  CHECK(ck.state == t.state());
  auto loaded = ck.model;
  const auto a = predict(m, f.test.features), b = predict(loaded, f.test.features);
  CHECK(bitwise_equal(a.log_probs.data, b.log_probs.data));

  SUBCASE("resuming continues the same trajectory") {
    for (int s = 0; s < 10; ++s) t.step();
    Trainer resumed(loaded, f.set, cfg, Variant::knowman, ck.state);
    for (int s = 0; s < 10; ++s) resumed.step();
    CHECK(same_state(loaded, m));
    CHECK(resumed.state() == t.state());
  }
  SUBCASE("damaged files are rejected") {
    std::ifstream in(path, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto bad = temp_path("bad.ckpt");
    auto write = [&](const std::string& s) { std::ofstream(bad, std::ios::binary) << s; };

    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    write(flipped);
    CHECK_THROWS_AS(load_checkpoint(bad), IoError);
    write(bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_checkpoint(bad), IoError);
    std::string version = bytes;
    version[8] = 9;
    write(version);
    CHECK_THROWS_AS(load_checkpoint(bad), IoError);
    write("KNOWMANC");
    CHECK_THROWS_AS(load_checkpoint(bad), IoError);
    CHECK_THROWS_AS(load_checkpoint(temp_path("absent.ckpt")), IoError);
    // the good file is untouched
    CHECK(same_state(load_checkpoint(path).model, m));
  }
}

TEST_CASE("config serialisation and validation") {
  TrainConfig c = small_config();
  c.optimizer_main = OptimizerKind::adamw;
  c.eval_cadence = EvalCadence::every_k_steps;
  c.eval_every_k = 50;
  c.metric = Metric::f1_pos;
  c.tie_policy.kind = TiePolicy::Kind::majority_random_tie;
  const auto back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  const auto path = temp_path("config.json");
  save_train_config(c, path);
  CHECK(to_json(load_train_config(path)) == to_json(c));

  CHECK(train_config_from_json({{"lambda", 0.5}}).lambda == 0.5);
  CHECK(train_config_from_json({{"lambda", 0.5}}).n_critic == TrainConfig{}.n_critic);
  CHECK_THROWS_AS(train_config_from_json({{"lamda", 0.5}}), SchemaError);
  CHECK_THROWS_AS(train_config_from_json({{"lambda", "big"}}), SchemaError);
  CHECK_THROWS_AS(train_config_from_json({{"lambda", -1.0}}), SchemaError);

  TrainConfig bad;
  bad.batch_size = 1;
  CHECK_THROWS_AS(validate(bad), SchemaError);
  bad = {};
  bad.dropout = 1.0;
  CHECK_THROWS_AS(validate(bad), SchemaError);
  bad = {};
  bad.n_critic = -1;
  CHECK_THROWS_AS(validate(bad), SchemaError);
}

TEST_CASE("instance level view keeps one triple per labelled instance") {
  const auto f = make_fixture();
  const auto inst = instance_level(f.set);
  std::set<std::size_t> ids;
  for (const auto& t : inst.triples) {
    CHECK(ids.insert(t.instance).second);
    int lowest = 1 << 30;
    for (const auto& u : f.set.triples)
      if (u.instance == t.instance) lowest = std::min(lowest, u.lf);
    CHECK(t.lf == lowest);
  }
  std::set<std::size_t> labelled;
  for (const auto& t : f.set.triples) labelled.insert(t.instance);
  CHECK(ids == labelled);
}
