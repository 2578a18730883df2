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
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "doctest.h"
#include "knowman/dataset_io.hpp"
#include "knowman/error.hpp"
#include "knowman/rng.hpp"

using namespace knowman;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "knowman_test_dataset_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

Corpus small_corpus() {
  Corpus c;
  c.label_names = {"ham", "spam"};
  c.split = Split::test;
  c.instances = {{0, "hello there", 0}, {1, "buy now \"cheap\"", 1}, {2, "caf\xc3\xa9 \\ tab\tend", std::nullopt}};
  return c;
}

std::vector<std::string> tokens_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("split names round trip") {
  for (Split s : {Split::train, Split::validation, Split::test}) CHECK(parse_split(to_string(s)) == s);
  CHECK_THROWS_AS(parse_split("dev"), SchemaError);
}

TEST_CASE("save then load reproduces the corpus") {
  const Corpus c = small_corpus();
  const auto p = temp_path("roundtrip.jsonl");
  save_corpus(c, p);
  const Corpus back = load_corpus(p, Split::test);
  REQUIRE(back.size() == c.size());
  CHECK(back.label_names == c.label_names);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(back.instances[i].id == i);
    CHECK(back.instances[i].text == c.instances[i].text);
    CHECK(back.instances[i].gold_label == c.instances[i].gold_label);
  }
  CHECK(back.texts() == c.texts());
  CHECK(back.label_index("spam") == 1);
  CHECK_FALSE(back.label_index("eggs").has_value());
}

TEST_CASE("loader skips blank lines and reports the failing line") {
  const auto p = temp_path("lines.jsonl");
  write_text(p, "{\"label_names\":[\"a\",\"b\"]}\n\n{\"text\":\"x\",\"label\":\"a\"}\n   \n{\"text\":\"y\"}\n");
  const Corpus c = load_corpus(p, Split::train);
  CHECK(c.size() == 2);
  CHECK(c.instances[1].id == 1);
  CHECK_FALSE(c.instances[1].gold_label.has_value());

  write_text(p, "{\"label_names\":[\"a\",\"b\"]}\n{\"text\":\"x\"}\n{\"text\": oops}\n");
  try {
    load_corpus(p, Split::train);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("loader rejects bad inputs") {
  const auto p = temp_path("bad.jsonl");
  write_text(p, "");
  CHECK_THROWS_AS(load_corpus(p, Split::train), ParseError);
  write_text(p, "\n\n");
  CHECK_THROWS_AS(load_corpus(p, Split::train), ParseError);
  write_text(p, "{\"label_names\":[\"a\"]}\n{\"text\":\"x\",\"label\":\"zzz\"}\n");
  CHECK_THROWS_AS(load_corpus(p, Split::train), SchemaError);
  write_text(p, "{\"label_names\":[\"a\",\"b\"]}\n{\"label\":\"a\"}\n");
  CHECK_THROWS_AS(load_corpus(p, Split::train), ParseError);
  CHECK_THROWS_AS(load_corpus(temp_path("missing.jsonl"), Split::train), IoError);
}

TEST_CASE("validate_corpus checks ids and labels") {
  Corpus c = small_corpus();
  CHECK_NOTHROW(validate_corpus(c));
  c.instances[1].id = 7;
  CHECK_THROWS_AS(validate_corpus(c), SchemaError);
  c = small_corpus();
  c.instances[0].gold_label = 2;
  CHECK_THROWS_AS(validate_corpus(c), SchemaError);
  c = small_corpus();
  c.label_names = {"a", "a"};
  CHECK_THROWS_AS(validate_corpus(c), SchemaError);
}

TEST_CASE("split_corpus partitions every instance exactly once") {
  Corpus c;
  c.label_names = {"n", "p"};
  for (std::size_t i = 0; i < 101; ++i) c.instances.push_back({i, "doc" + std::to_string(i), int(i % 2)});

  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    const auto [a, b] = split_corpus(c, 0.3, seed);
    CHECK(a.size() == 30);
    CHECK(a.size() + b.size() == c.size());
    std::multiset<std::string> seen;
    for (const auto* part : {&a, &b}) {
      int last = -1;
      for (std::size_t i = 0; i < part->size(); ++i) {
        const auto& inst = part->instances[i];
        CHECK(inst.id == i);
        const int orig = std::stoi(inst.text.substr(3));
        CHECK(orig > last);  // relative order kept
        last = orig;
        CHECK(inst.gold_label == orig % 2);
        seen.insert(inst.text);
      }
    }
    CHECK(seen.size() == c.size());
    CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == c.size());

    const auto again = split_corpus(c, 0.3, seed);
    CHECK(again.first.texts() == a.texts());
  }
  CHECK(split_corpus(c, 0.3, 1).first.texts() != split_corpus(c, 0.3, 2).first.texts());
  CHECK_THROWS_AS(split_corpus(c, 0.0, 1), SchemaError);
  CHECK_THROWS_AS(split_corpus(c, 1.0, 1), SchemaError);
}

TEST_CASE("synthetic corpora are deterministic per seed") {
  SynthSpec spec;
  spec.n_train = 80;
  spec.n_test = 40;
  const auto a = synth_generate(spec);
  const auto b = synth_generate(spec);
  CHECK(a.train.texts() == b.train.texts());
  CHECK(a.test.texts() == b.test.texts());
  spec.seed = 5;
  CHECK(synth_generate(spec).train.texts() != a.train.texts());
}

TEST_CASE("synthetic corpora follow the generator contract") {
  SynthSpec spec;
  spec.n_train = 300;
  spec.n_test = 200;
  spec.n_classes = 3;
  spec.n_lfs_per_class = 2;
  const auto d = synth_generate(spec);
  CHECK(d.lfs.size() == 6);
  CHECK(d.train.label_names == std::vector<std::string>{"c0", "c1", "c2"});
  for (const auto& inst : d.train.instances) CHECK_FALSE(inst.gold_label.has_value());

  std::map<int, int> per_class;
  std::set<std::string> keywords;
  for (const auto& lf : d.lfs) {
    CHECK(lf.kind == "keyword");
    keywords.insert(lf.pattern);
  }
  for (const auto& inst : d.test.instances) {
    REQUIRE(inst.gold_label.has_value());
    ++per_class[*inst.gold_label];
    const auto toks = tokens_of(inst.text);
    CHECK(toks.size() >= spec.noise_tokens_per_doc);
    for (const auto& t : toks) {
      CHECK(keywords.count(t) == 0);  // stripped at test time
      if (t.rfind("bg", 0) == 0) CHECK(t == synth_background(*inst.gold_label, t.back() - '0'));
    }
  }
  // labels are balanced by construction
  for (int c = 0; c < 3; ++c) CHECK(per_class[c] == 200 / 3 + (c < 200 % 3 ? 1 : 0));
}

TEST_CASE("keyword rate in training texts stays within a binomial bound") {
  // Each text of class c carries c's keyword k with probability p: the count
  // over the n/2 texts of class c is Binomial(n/2, p).
  SynthSpec spec;
  spec.n_train = 2000;
  spec.n_lfs_per_class = 1;
  spec.lf_leak_prob = 0.5;
  const auto d = synth_generate(spec);
  for (int c = 0; c < 2; ++c) {
    std::size_t hits = 0, wrong_class = 0;
    for (const auto& inst : d.train.instances) {
      const auto toks = tokens_of(inst.text);
      const bool has = std::find(toks.begin(), toks.end(), synth_keyword(c, 0)) != toks.end();
      const bool has_other = std::find(toks.begin(), toks.end(), synth_keyword(1 - c, 0)) != toks.end();
      if (has) ++hits;
      if (has && has_other) ++wrong_class;
    }
    const double n = 1000.0, p = 0.5;
    CHECK(std::abs(double(hits) - n * p) <= 3.0 * std::sqrt(n * p * (1 - p)));
    CHECK(wrong_class == 0);
  }
}

TEST_CASE("keeping LF tokens in test makes keyword lookup exact") {
  SynthSpec spec;
  spec.n_train = 50;
  spec.n_test = 300;
  spec.lf_leak_prob = 1.0;
  spec.strip_lf_tokens_in_test = false;
  const auto d = synth_generate(spec);
  std::size_t correct = 0;
  for (const auto& inst : d.test.instances) {
    const auto toks = tokens_of(inst.text);
    int guess = -1;
    for (int c = 0; c < spec.n_classes; ++c)
      if (std::find(toks.begin(), toks.end(), synth_keyword(c, 0)) != toks.end()) guess = c;
    if (guess == *inst.gold_label) ++correct;
  }
  CHECK(correct == d.test.size());
}

TEST_CASE("synth spec validation") {
  SynthSpec s;
  s.n_classes = 1;
  CHECK_THROWS_AS(validate(s), SchemaError);
  s = SynthSpec{};
  s.lf_leak_prob = 1.5;
  CHECK_THROWS_AS(validate(s), SchemaError);
  s = SynthSpec{};
  s.noise_vocab_size = 0;
  CHECK_THROWS_AS(validate(s), SchemaError);
}
