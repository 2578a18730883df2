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

#include "knowman/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "knowman/dataset_io.hpp"
#include "knowman/error.hpp"
#include "knowman/eval_stats.hpp"
#include "knowman/hypersearch.hpp"
#include "knowman/lf_engine.hpp"
#include "knowman/rng.hpp"
#include "knowman/text_features.hpp"
#include "knowman/trainer.hpp"

namespace knowman {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "1.0.0";

std::string hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json params = json::object();
  json seeds = json::object();
  json inputs = json::object();

  void input(const std::string& role, const fs::path& path) {
    inputs[role] = {{"path", path.string()}, {"fnv1a64", hash_file(path)}};
  }
  void write(const fs::path& dir) const {
    write_json(dir / "manifest.json", {{"tool", "knowman"},
                                       {"version", kVersion},
                                       {"command", command},
                                       {"argv", argv},
                                       {"params", params},
                                       {"seeds", seeds},
                                       {"inputs", inputs}});
  }
};

// ---------------------------------------------------------------------------
// Shared pipeline pieces

enum class ModelKind { knowman, feature, logreg };

ModelKind parse_model_kind(const std::string& s) {
  if (s == "knowman") return ModelKind::knowman;
  if (s == "feature") return ModelKind::feature;
  if (s == "logreg") return ModelKind::logreg;
  throw SchemaError("unknown model kind '" + s + "'");
}

struct Prepared {
  Corpus train;
  std::vector<LfSpec> lf_specs;
  std::vector<LabelingFunction> lfs;
  Vocabulary vocab;
  TrainingSet set;
  std::optional<EvalSet> valid;
  CoverageStats coverage;
};

EvalSet make_eval_set(const Corpus& corpus, const Corpus& reference, const Vocabulary& vocab) {
  if (corpus.label_names != reference.label_names)
    throw SchemaError("label names of evaluation corpus differ from the training corpus");
  EvalSet set;
  set.features = vectorize(corpus, vocab);
  for (const auto& inst : corpus.instances) {
    if (!inst.gold_label)
      throw SchemaError("evaluation instance " + std::to_string(inst.id) + " has no gold label");
    set.gold.push_back(*inst.gold_label);
  }
  return set;
}

Prepared prepare(const fs::path& train_path, const fs::path& lfs_path,
                 const std::optional<std::string>& valid_path, const TrainConfig& cfg) {
  Prepared p;
  p.train = load_corpus(train_path, Split::train);
  p.lf_specs = load_lf_specs(lfs_path);
  p.lfs = compile_lfs(p.lf_specs, p.train.label_names);
  const auto matches = apply_lfs(p.train, p.lfs);
  const auto weak = resolve_weak_labels(matches, p.lfs, static_cast<int>(p.train.label_names.size()),
                                        cfg.tie_policy);
  p.coverage = coverage_stats(weak, matches);
  VectorizerOptions vopt;
  vopt.min_df = cfg.min_df;
  p.vocab = fit_vectorizer(p.train, vopt);
  p.set = make_training_set(vectorize(p.train, p.vocab), weak);
  if (valid_path) {
    const Corpus valid = load_corpus(*valid_path, Split::validation);
    p.valid = make_eval_set(valid, p.train, p.vocab);
  }
  return p;
}

struct TrainOutcome {
  KnowManModel model;
  TrainResult result;
};

TrainOutcome train_kind(const Prepared& p, TrainConfig cfg, ModelKind kind,
                        const std::optional<fs::path>& checkpoint,
                        const std::function<void(const HistoryRecord&)>& on_record) {
  TrainingSet instances;
  const TrainingSet* data = &p.set;
  TrainOptions opts;
  opts.validation = p.valid ? &*p.valid : nullptr;
  opts.checkpoint_path = checkpoint;
  opts.on_record = on_record;
  opts.on_warning = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  if (kind == ModelKind::logreg) {
    cfg.num_f_layers = 0;
    instances = instance_level(p.set);
    data = &instances;
  }
  opts.variant = kind == ModelKind::knowman ? Variant::knowman : Variant::feature;
  if (kind != ModelKind::knowman) cfg.lambda = 0.0;

  TrainOutcome out{build_model(p.set.features.dim, p.set.n_classes, p.set.n_lfs, cfg,
                               derive_seed(cfg.seed, "model-init")),
                   {}};
  out.result = train(out.model, *data, cfg, opts);
  return out;
}

// ---------------------------------------------------------------------------
// Config overrides shared by train and search

struct Overrides {
  std::optional<double> lambda, lr_main, lr_d, weight_decay, dropout;
  std::optional<int> n_critic, epochs, f_layers, c_layers, d_layers, positive_class;
  std::optional<std::size_t> batch_size, hidden, eval_every, min_df;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> optimizer_main, optimizer_d, eval_cadence, metric, tie_policy;

  void attach(CLI::App& app) {
    // Later occurrences win, so scripts can append overrides.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--lambda", lambda, "Weight of the reversed discriminator loss")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--n-critic", n_critic, "Discriminator steps per main step")->check(CLI::NonNegativeNumber);
    app.add_option("--batch-size", batch_size, "Triples per batch")->check(CLI::Range(2, 1 << 30));
    app.add_option("--epochs", epochs)->check(CLI::NonNegativeNumber);
    app.add_option("--lr-main", lr_main, "Learning rate of extractor and classifier")->check(CLI::PositiveNumber);
    app.add_option("--lr-d", lr_d, "Learning rate of the discriminator")->check(CLI::PositiveNumber);
    app.add_option("--optimizer-main", optimizer_main)->check(CLI::IsMember({"adam", "adamw"}));
    app.add_option("--optimizer-d", optimizer_d)->check(CLI::IsMember({"adam", "adamw"}));
    app.add_option("--weight-decay", weight_decay)->check(CLI::NonNegativeNumber);
    app.add_option("--dropout", dropout)->check(CLI::Range(0.0, 0.999));
    app.add_option("--hidden", hidden, "Shared hidden size")->check(CLI::PositiveNumber);
    app.add_option("--f-layers", f_layers)->check(CLI::NonNegativeNumber);
    app.add_option("--c-layers", c_layers)->check(CLI::PositiveNumber);
    app.add_option("--d-layers", d_layers)->check(CLI::PositiveNumber);
    app.add_option("--eval-cadence", eval_cadence)->check(CLI::IsMember({"per_batch", "every_k_steps"}));
    app.add_option("--eval-every", eval_every)->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Root seed");
    app.add_option("--metric", metric)->check(CLI::IsMember({"accuracy", "f1_pos"}));
    app.add_option("--positive-class", positive_class)->check(CLI::NonNegativeNumber);
    app.add_option("--tie-policy", tie_policy)
        ->check(CLI::IsMember({"majority_drop_ties", "majority_random_tie"}));
    app.add_option("--min-df", min_df)->check(CLI::PositiveNumber);
  }

  TrainConfig apply(TrainConfig c) const {
    json j = json::object();
    if (lambda) j["lambda"] = *lambda;
    if (n_critic) j["n_critic"] = *n_critic;
    if (batch_size) j["batch_size"] = *batch_size;
    if (epochs) j["epochs"] = *epochs;
    if (lr_main) j["lr_main"] = *lr_main;
    if (lr_d) j["lr_d"] = *lr_d;
    if (optimizer_main) j["optimizer_main"] = *optimizer_main;
    if (optimizer_d) j["optimizer_d"] = *optimizer_d;
    if (weight_decay) j["weight_decay"] = *weight_decay;
    if (dropout) j["dropout"] = *dropout;
    if (hidden) j["shared_hidden_size"] = *hidden;
    if (f_layers) j["num_f_layers"] = *f_layers;
    if (c_layers) j["num_c_layers"] = *c_layers;
    if (d_layers) j["num_d_layers"] = *d_layers;
    if (eval_cadence) j["eval_cadence"] = *eval_cadence;
    if (eval_every) j["eval_every_k"] = *eval_every;
    if (seed) j["seed"] = *seed;
    if (metric) j["metric"] = *metric;
    if (positive_class) j["positive_class"] = *positive_class;
    if (tie_policy) j["tie_policy"] = *tie_policy;
    if (min_df) j["min_df"] = *min_df;
    c = train_config_from_json(j, c);
    c.tie_policy.seed = derive_seed(c.seed, "tie");
    return c;
  }
};

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(const SynthSpec& spec, const fs::path& out_dir, Manifest manifest) {
  fs::create_directories(out_dir);
  const auto data = synth_generate(spec);
  save_corpus(data.train, out_dir / "train.jsonl");
  save_corpus(data.test, out_dir / "test.jsonl");
  save_lf_specs(data.lfs, out_dir / "lfs.jsonl");
  manifest.params = {{"n_train", spec.n_train},
                     {"n_test", spec.n_test},
                     {"n_classes", spec.n_classes},
                     {"n_lfs_per_class", spec.n_lfs_per_class},
                     {"lf_leak_prob", spec.lf_leak_prob},
                     {"background_signal_prob", spec.background_signal_prob},
                     {"noise_vocab_size", spec.noise_vocab_size},
                     {"n_background_per_class", spec.n_background_per_class},
                     {"noise_tokens_per_doc", spec.noise_tokens_per_doc},
                     {"strip_lf_tokens_in_test", spec.strip_lf_tokens_in_test}};
  manifest.seeds = {{"root", spec.seed}};
  manifest.write(out_dir);
  std::cout << "wrote " << data.train.size() << " train / " << data.test.size() << " test instances and "
            << data.lfs.size() << " LFs to " << out_dir.string() << '\n';
  return 0;
}

int cmd_apply_lfs(const fs::path& corpus_path, const fs::path& lfs_path, const fs::path& out_dir,
                  TiePolicy policy, Manifest manifest) {
  fs::create_directories(out_dir);
  const Corpus corpus = load_corpus(corpus_path, Split::train);
  const auto lfs = compile_lfs(load_lf_specs(lfs_path), corpus.label_names);
  const auto matches = apply_lfs(corpus, lfs);
  const auto weak = resolve_weak_labels(matches, lfs, static_cast<int>(corpus.label_names.size()), policy);
  const auto stats = coverage_stats(weak, matches);

  {
    std::ofstream out(out_dir / "matches.jsonl");
    for (std::size_t i = 0; i < matches.n_instances; ++i)
      out << json{{"id", i}, {"lfs", matches.rows[i]}}.dump() << '\n';
  }
  {
    std::ofstream out(out_dir / "weak_labels.jsonl");
    for (std::size_t i = 0; i < weak.n_instances; ++i) {
      json rec{{"id", i}};
      rec["label"] = weak.weak_labels[i] ? json(corpus.label_names[*weak.weak_labels[i]]) : json(nullptr);
      out << rec.dump() << '\n';
    }
  }
  json lf_table = json::array();
  for (const auto& lf : lfs)
    lf_table.push_back({{"lf", lf.lf_id()},
                        {"name", lf.name()},
                        {"fires", stats.fire_counts[static_cast<std::size_t>(lf.lf_id())]},
                        {"triples", stats.triple_counts[static_cast<std::size_t>(lf.lf_id())]}});
  json dist = json::object();
  for (std::size_t c = 0; c < corpus.label_names.size(); ++c)
    dist[corpus.label_names[c]] = stats.label_distribution[c];
  write_json(out_dir / "coverage.json", {{"n_instances", stats.n_instances},
                                         {"n_labeled", stats.n_labeled},
                                         {"coverage", stats.coverage},
                                         {"n_triples", stats.n_triples},
                                         {"label_distribution", dist},
                                         {"lfs", lf_table}});
  manifest.input("corpus", corpus_path);
  manifest.input("lfs", lfs_path);
  manifest.params = {{"tie_policy", policy.kind == TiePolicy::Kind::majority_random_tie
                                        ? "majority_random_tie"
                                        : "majority_drop_ties"}};
  manifest.seeds = {{"tie", policy.seed}};
  manifest.write(out_dir);
  std::cout << "coverage " << std::fixed << std::setprecision(4) << stats.coverage << " ("
            << stats.n_labeled << "/" << stats.n_instances << "), " << stats.n_triples << " triples\n";
  return 0;
}

int cmd_train(const fs::path& train_path, const fs::path& lfs_path, const std::optional<std::string>& valid,
              const std::optional<std::string>& config_path, const Overrides& overrides,
              const std::string& kind_name, const fs::path& out_dir, Manifest manifest) {
  TrainConfig cfg = config_path ? load_train_config(*config_path) : TrainConfig{};
  cfg = overrides.apply(cfg);
  const ModelKind kind = parse_model_kind(kind_name);
  fs::create_directories(out_dir);

  const Prepared p = prepare(train_path, lfs_path, valid, cfg);
  if (p.set.triples.size() < 2) throw SchemaError("the LFs label fewer than 2 training instances");
  p.vocab.save(out_dir / "vocab.txt");

  std::ofstream history(out_dir / "history.jsonl");
  const auto outcome = train_kind(p, cfg, kind, out_dir / "model.ckpt",
                                  [&](const HistoryRecord& r) { history << to_json(r).dump() << '\n'; });

  json lf_names = json::array();
  for (const auto& lf : p.lfs) lf_names.push_back(lf.name());
  TrainConfig effective = cfg;
  if (kind != ModelKind::knowman) effective.lambda = 0.0;
  if (kind == ModelKind::logreg) effective.num_f_layers = 0;
  write_json(out_dir / "model_info.json", {{"model_kind", kind_name},
                                           {"label_names", p.train.label_names},
                                           {"lf_names", lf_names},
                                           {"config", to_json(effective)}});
  save_train_config(effective, out_dir / "config.json");

  manifest.input("train", train_path);
  manifest.input("lfs", lfs_path);
  if (valid) manifest.input("valid", *valid);
  if (config_path) manifest.input("config", *config_path);
  manifest.params = {{"model_kind", kind_name}, {"config", to_json(effective)}};
  manifest.seeds = {{"root", cfg.seed},
                    {"model_init", derive_seed(cfg.seed, "model-init")},
                    {"tie", cfg.tie_policy.seed}};
  manifest.write(out_dir);

  const auto& r = outcome.result;
  std::cout << "trained " << kind_name << ": " << r.history.size() << " steps, coverage "
            << std::fixed << std::setprecision(4) << p.coverage.coverage << ", " << p.set.triples.size()
            << " triples";
  if (r.best_metric)
    std::cout << ", best " << to_string(cfg.metric) << ' ' << *r.best_metric << " at step " << r.best_step;
  else
    std::cout << ", final model kept";
  std::cout << '\n';
  return 0;
}

struct LoadedModel {
  std::string name;
  KnowManModel model;
  Vocabulary vocab;
  std::vector<std::string> label_names;
};

LoadedModel load_model_dir(const fs::path& dir) {
  LoadedModel m;
  m.name = dir.filename().string();
  if (m.name.empty()) m.name = dir.parent_path().filename().string();
  m.model = load_checkpoint(dir / "model.ckpt").model;
  m.vocab = Vocabulary::load(dir / "vocab.txt");
  const json info = read_json(dir / "model_info.json");
  m.label_names = info.at("label_names").get<std::vector<std::string>>();
  return m;
}

int cmd_eval(const std::vector<std::string>& model_dirs, const fs::path& test_path,
             const std::string& metric_name, int positive_class, const fs::path& out_dir, Manifest manifest) {
  const Metric metric = parse_metric(metric_name);
  fs::create_directories(out_dir);
  const Corpus test = load_corpus(test_path, Split::test);
  std::vector<int> gold;
  for (const auto& inst : test.instances) {
    if (!inst.gold_label) throw SchemaError("test instance " + std::to_string(inst.id) + " has no gold label");
    gold.push_back(*inst.gold_label);
  }
  if (positive_class >= static_cast<int>(test.label_names.size()))
    throw SchemaError("positive class out of range");

  json reports = json::array();
  std::ostringstream grid;
  grid << std::left << std::setw(24) << "model" << std::right << std::setw(8) << "Acc" << std::setw(8) << "P"
       << std::setw(8) << "R" << std::setw(8) << "F1" << '\n';
  grid << std::string(56, '-') << '\n';
  for (const auto& dir : model_dirs) {
    LoadedModel m = load_model_dir(dir);
    if (m.label_names != test.label_names) throw SchemaError("model " + dir + " was trained on other labels");
    const auto pred = predict(m.model, vectorize(test, m.vocab));
    const auto rep = score(pred.classes, gold, positive_class);

    const fs::path pred_path = out_dir / ("predictions_" + m.name + ".jsonl");
    std::ofstream out(pred_path);
    for (std::size_t i = 0; i < pred.classes.size(); ++i)
      out << json{{"id", i}, {"class", pred.classes[i]}, {"label", test.label_names[pred.classes[i]]}}.dump()
          << '\n';

    reports.push_back({{"model", m.name},
                       {"model_dir", dir},
                       {"n", rep.n},
                       {"accuracy", rep.accuracy},
                       {"precision", rep.precision},
                       {"recall", rep.recall},
                       {"f1", rep.f1},
                       {"confusion", {{"tp", rep.tp}, {"fp", rep.fp}, {"fn", rep.fn}, {"tn", rep.tn}}},
                       {"metric", to_string(metric)},
                       {"metric_value", metric == Metric::f1_pos ? rep.f1 : rep.accuracy},
                       {"predictions", pred_path.string()}});
    grid << std::left << std::setw(24) << m.name << std::right << std::fixed << std::setprecision(3)
         << std::setw(8) << rep.accuracy << std::setw(8) << rep.precision << std::setw(8) << rep.recall
         << std::setw(8) << rep.f1 << '\n';
    manifest.input("model:" + m.name, fs::path(dir) / "model.ckpt");
  }
  write_json(out_dir / "eval_report.json",
             {{"test", test_path.string()}, {"positive_class", positive_class}, {"reports", reports}});
  manifest.input("test", test_path);
  manifest.params = {{"metric", metric_name}, {"positive_class", positive_class}};
  manifest.write(out_dir);
  std::cout << grid.str();
  return 0;
}

std::vector<int> load_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions " + path.string());
  std::vector<int> preds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      if (rec.at("id").get<std::size_t>() != preds.size()) throw ParseError("prediction ids must be dense", lineno);
      preds.push_back(rec.at("class").get<int>());
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed prediction record: ") + e.what(), lineno);
    }
  }
  return preds;
}

int cmd_significance(const fs::path& a_path, const fs::path& b_path, const fs::path& test_path,
                     const std::string& metric_name, int positive_class, std::size_t rounds, std::uint64_t seed,
                     unsigned threads, const fs::path& out_dir, Manifest manifest) {
  fs::create_directories(out_dir);
  const Corpus test = load_corpus(test_path, Split::test);
  std::vector<int> gold;
  for (const auto& inst : test.instances) {
    if (!inst.gold_label) throw SchemaError("test instance " + std::to_string(inst.id) + " has no gold label");
    gold.push_back(*inst.gold_label);
  }
  const auto a = load_predictions(a_path);
  const auto b = load_predictions(b_path);
  const Metric metric = parse_metric(metric_name);
  const auto res = approx_randomization_test(a, b, gold, metric, positive_class, rounds, seed, threads);
  write_json(out_dir / "significance.json", {{"metric", metric_name},
                                             {"metric_a", res.metric_a},
                                             {"metric_b", res.metric_b},
                                             {"observed_diff", res.observed_diff},
                                             {"p_value", res.p_value},
                                             {"rounds", res.rounds},
                                             {"seed", res.seed},
                                             {"significant_at_0.05", res.significant()}});
  manifest.input("preds_a", a_path);
  manifest.input("preds_b", b_path);
  manifest.input("test", test_path);
  manifest.params = {{"metric", metric_name}, {"positive_class", positive_class}, {"rounds", rounds}};
  manifest.seeds = {{"root", seed}};
  manifest.write(out_dir);
  std::cout << std::fixed << std::setprecision(4) << to_string(metric) << " A=" << res.metric_a
            << " B=" << res.metric_b << " diff=" << res.observed_diff << " p=" << res.p_value
            << (res.significant() ? " (significant)" : " (not significant)") << '\n';
  return 0;
}

int cmd_search(const fs::path& train_path, const fs::path& lfs_path, const std::string& valid,
               const std::optional<std::string>& config_path, const Overrides& overrides, std::size_t budget,
               std::uint64_t seed, unsigned parallel, const fs::path& out_dir, Manifest manifest) {
  TrainConfig base = config_path ? load_train_config(*config_path) : TrainConfig{};
  base = overrides.apply(base);
  fs::create_directories(out_dir);
  const Prepared p = prepare(train_path, lfs_path, valid, base);

  std::ofstream log(out_dir / "trials.jsonl");
  SearchOptions opts;
  opts.parallelism = parallel;
  opts.on_trial = [&](const Trial& t) {
    log << to_json(t).dump() << '\n';
    log.flush();
    std::cout << "trial " << t.index << ": "
              << (t.ok() ? std::to_string(*t.metric) : "failed (" + t.error + ")") << '\n';
  };
  auto train_fn = [&](const TrainConfig& cfg) {
    TrainConfig c = cfg;
    c.tie_policy = base.tie_policy;
    const auto out = train_kind(p, c, ModelKind::knowman, std::nullopt, {});
    if (!out.result.best_metric) throw Error("trial produced no validation metric");
    return *out.result.best_metric;
  };
  const auto trials = random_search(SearchSpace{}, budget, train_fn, seed, base, opts);
  if (!trials.front().ok()) throw Error("every search trial failed");
  save_train_config(trials.front().config, out_dir / "best_config.json");

  manifest.input("train", train_path);
  manifest.input("lfs", lfs_path);
  manifest.input("valid", valid);
  manifest.params = {{"budget", budget}, {"base_config", to_json(base)}};
  manifest.seeds = {{"root", seed}};
  manifest.write(out_dir);
  std::cout << "best metric " << *trials.front().metric << " (trial " << trials.front().index << ")\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Weak supervision with an adversarial labeling-function discriminator", "knowman"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  Manifest manifest;
  for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);

  // synth
  SynthSpec spec;
  std::string synth_out = "synth";
  bool no_strip = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic LF-leak corpus and its LFs");
  synth->add_option("--out-dir", synth_out)->capture_default_str();
  synth->add_option("--seed", spec.seed)->capture_default_str();
  synth->add_option("--n-train", spec.n_train)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--n-test", spec.n_test)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--n-classes", spec.n_classes)->check(CLI::Range(2, 1000))->capture_default_str();
  synth->add_option("--lfs-per-class", spec.n_lfs_per_class)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--leak", spec.lf_leak_prob, "P(LF keyword in a training text of its class)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  synth->add_option("--background", spec.background_signal_prob, "P(class background token)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  synth->add_option("--background-per-class", spec.n_background_per_class)
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth->add_option("--noise-vocab", spec.noise_vocab_size)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--noise-per-doc", spec.noise_tokens_per_doc)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_flag("--keep-lf-tokens-in-test", no_strip, "Do not strip LF keywords from test texts");

  // apply-lfs
  std::string al_corpus, al_lfs, al_out = "lf_output", al_tie = "majority_drop_ties";
  std::uint64_t al_seed = 0;
  auto* apply = app.add_subcommand("apply-lfs", "Apply LFs, resolve weak labels and report coverage");
  apply->add_option("--corpus", al_corpus)->required()->check(CLI::ExistingFile);
  apply->add_option("--lfs", al_lfs)->required()->check(CLI::ExistingFile);
  apply->add_option("--out-dir", al_out)->capture_default_str();
  apply->add_option("--tie-policy", al_tie)
      ->check(CLI::IsMember({"majority_drop_ties", "majority_random_tie"}))
      ->capture_default_str();
  apply->add_option("--seed", al_seed, "Root seed (tie breaking)")->capture_default_str();

  // train
  std::string tr_train, tr_lfs, tr_out = "run", tr_kind = "knowman";
  std::optional<std::string> tr_valid, tr_config;
  Overrides tr_over;
  auto* trn = app.add_subcommand("train", "Train a KnowMAN model or one of its baselines");
  trn->add_option("--train", tr_train)->required()->check(CLI::ExistingFile);
  trn->add_option("--lfs", tr_lfs)->required()->check(CLI::ExistingFile);
  trn->add_option("--valid", tr_valid)->check(CLI::ExistingFile);
  trn->add_option("--config", tr_config)->check(CLI::ExistingFile);
  trn->add_option("--model", tr_kind, "knowman | feature (lambda 0, no discriminator) | logreg")
      ->check(CLI::IsMember({"knowman", "feature", "logreg"}))
      ->capture_default_str();
  trn->add_option("--out-dir", tr_out)->capture_default_str();
  tr_over.attach(*trn);

  // eval
  std::vector<std::string> ev_models;
  std::string ev_test, ev_metric = "accuracy", ev_out = "eval";
  int ev_pos = 1;
  auto* ev = app.add_subcommand("eval", "Score trained models on a gold-labelled corpus");
  ev->add_option("--model-dir", ev_models)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--test", ev_test)->required()->check(CLI::ExistingFile);
  ev->add_option("--metric", ev_metric)->check(CLI::IsMember({"accuracy", "f1_pos"}))->capture_default_str();
  ev->add_option("--positive-class", ev_pos)->check(CLI::NonNegativeNumber)->capture_default_str();
  ev->add_option("--out-dir", ev_out)->capture_default_str();

  // significance
  std::string sg_a, sg_b, sg_test, sg_metric = "accuracy", sg_out = "significance";
  int sg_pos = 1;
  std::size_t sg_rounds = 10000;
  std::uint64_t sg_seed = 0;
  unsigned sg_threads = 1;
  auto* sig = app.add_subcommand("significance", "Paired approximate randomization test");
  sig->add_option("--preds-a", sg_a)->required()->check(CLI::ExistingFile);
  sig->add_option("--preds-b", sg_b)->required()->check(CLI::ExistingFile);
  sig->add_option("--test", sg_test)->required()->check(CLI::ExistingFile);
  sig->add_option("--metric", sg_metric)->check(CLI::IsMember({"accuracy", "f1_pos"}))->capture_default_str();
  sig->add_option("--positive-class", sg_pos)->check(CLI::NonNegativeNumber)->capture_default_str();
  sig->add_option("--rounds", sg_rounds)->check(CLI::PositiveNumber)->capture_default_str();
  sig->add_option("--seed", sg_seed)->capture_default_str();
  sig->add_option("--threads", sg_threads)->check(CLI::PositiveNumber)->capture_default_str();
  sig->add_option("--out-dir", sg_out)->capture_default_str();

  // search
  std::string se_train, se_lfs, se_valid, se_out = "search";
  std::optional<std::string> se_config;
  std::size_t se_budget = 20;
  std::uint64_t se_seed = 0;
  unsigned se_parallel = 1;
  Overrides se_over;
  auto* srch = app.add_subcommand("search", "Seeded random hyperparameter search");
  srch->add_option("--train", se_train)->required()->check(CLI::ExistingFile);
  srch->add_option("--lfs", se_lfs)->required()->check(CLI::ExistingFile);
  srch->add_option("--valid", se_valid)->required()->check(CLI::ExistingFile);
  srch->add_option("--config", se_config)->check(CLI::ExistingFile);
  srch->add_option("--budget", se_budget)->check(CLI::PositiveNumber)->capture_default_str();
  srch->add_option("--search-seed", se_seed)->capture_default_str();
  srch->add_option("--parallel", se_parallel)->check(CLI::PositiveNumber)->capture_default_str();
  srch->add_option("--out-dir", se_out)->capture_default_str();
  se_over.attach(*srch);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      manifest.command = "synth";
      spec.strip_lf_tokens_in_test = !no_strip;
      return cmd_synth(spec, synth_out, manifest);
    }
    if (apply->parsed()) {
      manifest.command = "apply-lfs";
      TiePolicy policy = al_tie == "majority_random_tie" ? TiePolicy::random_tie(derive_seed(al_seed, "tie"))
                                                          : TiePolicy::drop_ties();
      return cmd_apply_lfs(al_corpus, al_lfs, al_out, policy, manifest);
    }
    if (trn->parsed()) {
      manifest.command = "train";
      return cmd_train(tr_train, tr_lfs, tr_valid, tr_config, tr_over, tr_kind, tr_out, manifest);
    }
    if (ev->parsed()) {
      manifest.command = "eval";
      return cmd_eval(ev_models, ev_test, ev_metric, ev_pos, ev_out, manifest);
    }
    if (sig->parsed()) {
      manifest.command = "significance";
      return cmd_significance(sg_a, sg_b, sg_test, sg_metric, sg_pos, sg_rounds, sg_seed, sg_threads, sg_out,
                              manifest);
    }
    if (srch->parsed()) {
      manifest.command = "search";
      return cmd_search(se_train, se_lfs, se_valid, se_config, se_over, se_budget, se_seed, se_parallel, se_out,
                        manifest);
    }
  } catch (const SchemaError& e) {
    // Invalid parameter combinations found after parsing are usage errors too.
    std::cerr << "error: " << e.what() << '\n';
    return std::string_view(e.what()).starts_with("invalid config") ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("knowman");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace knowman
