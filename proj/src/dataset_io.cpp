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

#include "knowman/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "knowman/error.hpp"
#include "knowman/rng.hpp"

namespace knowman {
namespace {

using nlohmann::json;

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
  });
}

Corpus make_part(const Corpus& src, std::vector<std::size_t> ids) {
  std::sort(ids.begin(), ids.end());
  Corpus part;
  part.label_names = src.label_names;
  part.split = src.split;
  part.instances.reserve(ids.size());
  for (std::size_t id : ids) {
    Instance inst = src.instances[id];
    inst.id = part.instances.size();
    part.instances.push_back(std::move(inst));
  }
  return part;
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  throw SchemaError("unknown split '" + std::string(name) + "'");
}

std::vector<std::string> Corpus::texts() const {
  std::vector<std::string> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(inst.text);
  return out;
}

std::optional<int> Corpus::label_index(std::string_view name) const {
  for (std::size_t i = 0; i < label_names.size(); ++i)
    if (label_names[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

void validate_corpus(const Corpus& corpus) {
  if (corpus.label_names.size() < 2)
    throw SchemaError("corpus needs at least 2 label names");
  for (std::size_t a = 0; a < corpus.label_names.size(); ++a)
    for (std::size_t b = a + 1; b < corpus.label_names.size(); ++b)
      if (corpus.label_names[a] == corpus.label_names[b])
        throw SchemaError("duplicate label name '" + corpus.label_names[a] + "'");
  for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
    const auto& inst = corpus.instances[i];
    if (inst.id != i) throw SchemaError("instance ids are not dense");
    if (is_blank(inst.text))
      throw SchemaError("instance " + std::to_string(i) + " has empty text");
    if (inst.gold_label &&
        (*inst.gold_label < 0 ||
         static_cast<std::size_t>(*inst.gold_label) >= corpus.label_names.size()))
      throw SchemaError("instance " + std::to_string(i) + " has out-of-range label");
  }
}

Corpus load_corpus(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path.string());

  Corpus corpus;
  corpus.split = split;
  bool have_header = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), lineno);
    }
    if (!rec.is_object()) throw ParseError("record is not an object", lineno);

    if (!have_header) {
      auto it = rec.find("label_names");
      if (it == rec.end() || !it->is_array())
        throw ParseError("first record must be {\"label_names\":[...]}", lineno);
      for (const auto& name : *it) {
        if (!name.is_string()) throw ParseError("label names must be strings", lineno);
        corpus.label_names.push_back(name.get<std::string>());
      }
      if (corpus.label_names.size() < 2)
        throw SchemaError("line " + std::to_string(lineno) +
                          ": at least 2 label names required");
      have_header = true;
      continue;
    }

    auto text = rec.find("text");
    if (text == rec.end() || !text->is_string())
      throw ParseError("record lacks a string \"text\" field", lineno);
    Instance inst;
    inst.id = corpus.instances.size();
    inst.text = text->get<std::string>();
    if (is_blank(inst.text))
      throw SchemaError("line " + std::to_string(lineno) + ": empty text");
    if (auto label = rec.find("label"); label != rec.end() && !label->is_null()) {
      if (!label->is_string()) throw ParseError("\"label\" must be a string", lineno);
      const auto name = label->get<std::string>();
      auto idx = corpus.label_index(name);
      if (!idx)
        throw SchemaError("line " + std::to_string(lineno) + ": unknown label '" +
                          name + "'");
      inst.gold_label = *idx;
    }
    corpus.instances.push_back(std::move(inst));
  }
  if (corpus.instances.empty()) throw ParseError("empty corpus", 0);
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  validate_corpus(corpus);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  out << json{{"label_names", corpus.label_names}}.dump() << '\n';
  for (const auto& inst : corpus.instances) {
    json rec{{"text", inst.text}};
    if (inst.gold_label) rec["label"] = corpus.label_names[*inst.gold_label];
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double fraction,
                                       std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw SchemaError("split fraction must lie in (0, 1)");
  const std::size_t n = corpus.size();
  const auto n_first = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_first == 0 || n_first >= n) throw SchemaError("empty split");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  portable_shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> first(order.begin(), order.begin() + n_first);
  std::vector<std::size_t> second(order.begin() + n_first, order.end());
  return {make_part(corpus, std::move(first)), make_part(corpus, std::move(second))};
}

void validate(const SynthSpec& spec) {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0))
      throw SchemaError(std::string(name) + " must lie in [0, 1]");
  };
  prob(spec.lf_leak_prob, "lf_leak_prob");
  prob(spec.background_signal_prob, "background_signal_prob");
  if (spec.n_train == 0 || spec.n_test == 0) throw SchemaError("counts must be positive");
  if (spec.n_classes < 2) throw SchemaError("n_classes must be at least 2");
  if (spec.n_lfs_per_class < 1) throw SchemaError("n_lfs_per_class must be positive");
  if (spec.n_background_per_class < 0)
    throw SchemaError("n_background_per_class must be non-negative");
  if (spec.noise_vocab_size == 0 || spec.noise_tokens_per_doc == 0)
    throw SchemaError("noise vocabulary and noise tokens per doc must be positive");
}

std::string synth_keyword(int cls, int k) {
  return "lf" + std::to_string(cls) + "k" + std::to_string(k);
}
std::string synth_background(int cls, int k) {
  return "bg" + std::to_string(cls) + "t" + std::to_string(k);
}
std::string synth_noise(std::size_t k) { return "nz" + std::to_string(k); }

SynthCorpora synth_generate(const SynthSpec& spec) {
  validate(spec);
  SynthCorpora out;
  std::vector<std::string> names;
  for (int c = 0; c < spec.n_classes; ++c) names.push_back("c" + std::to_string(c));

  for (int c = 0; c < spec.n_classes; ++c)
    for (int k = 0; k < spec.n_lfs_per_class; ++k)
      out.lfs.push_back({synth_keyword(c, k), "keyword", synth_keyword(c, k), names[c]});

  auto generate = [&](std::size_t n, Split split, bool include_lf_tokens, bool gold) {
    Corpus corpus;
    corpus.label_names = names;
    corpus.split = split;
    Rng rng(derive_seed(spec.seed, to_string(split)));

    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % spec.n_classes);
    portable_shuffle(labels.begin(), labels.end(), rng);

    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = labels[i];
      tokens.clear();
      for (int k = 0; k < spec.n_lfs_per_class; ++k) {
        const bool hit = uniform01(rng) < spec.lf_leak_prob;
        if (hit && include_lf_tokens) tokens.push_back(synth_keyword(c, k));
      }
      for (int k = 0; k < spec.n_background_per_class; ++k)
        if (uniform01(rng) < spec.background_signal_prob)
          tokens.push_back(synth_background(c, k));
      for (std::size_t k = 0; k < spec.noise_tokens_per_doc; ++k)
        tokens.push_back(synth_noise(uniform_index(rng, spec.noise_vocab_size)));
      portable_shuffle(tokens.begin(), tokens.end(), rng);

      Instance inst;
      inst.id = i;
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (t) inst.text += ' ';
        inst.text += tokens[t];
      }
      if (gold) inst.gold_label = c;
      corpus.instances.push_back(std::move(inst));
    }
    return corpus;
  };

  out.train = generate(spec.n_train, Split::train, true, false);
  out.test = generate(spec.n_test, Split::test, !spec.strip_lf_tokens_in_test, true);
  return out;
}

}  // namespace knowman
