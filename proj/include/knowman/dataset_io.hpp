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

#ifndef KNOWMAN_DATASET_IO_HPP_
#define KNOWMAN_DATASET_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace knowman {

enum class Split { train, validation, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct Instance {
  std::size_t id = 0;
  std::string text;
  std::optional<int> gold_label;
};

// A labelled or unlabelled text collection. Instance ids are dense 0..N-1 in
// storage order and every gold label indexes into label_names.
struct Corpus {
  std::vector<Instance> instances;
  std::vector<std::string> label_names;
  Split split = Split::train;

  std::size_t size() const { return instances.size(); }
  std::vector<std::string> texts() const;
  std::optional<int> label_index(std::string_view name) const;
};

// Throws SchemaError if the corpus breaks one of its invariants.
void validate_corpus(const Corpus& corpus);

// On-disk format: UTF-8, one JSON object per line. The first line is the
// header {"label_names":[...]}, followed by {"text":..., "label"?:...}
// records. Blank lines are skipped.
Corpus load_corpus(const std::filesystem::path& path, Split split);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Shuffles with `seed` and puts round(fraction * N) instances in the first
// part, the rest in the second. Each part keeps the input's relative order and
// gets fresh dense ids.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double fraction,
                                       std::uint64_t seed);

// Parameters of the synthetic "LF-leak" corpus. Class c owns
// n_lfs_per_class keyword LFs and n_background_per_class background tokens.
// Training texts of class c contain each of c's keywords with probability
// lf_leak_prob and each of its background tokens with background_signal_prob;
// every text also carries noise_tokens_per_doc class-independent tokens.
struct SynthSpec {
  std::size_t n_train = 1000;
  std::size_t n_test = 500;
  int n_classes = 2;
  int n_lfs_per_class = 3;
  double lf_leak_prob = 0.9;
  double background_signal_prob = 0.6;
  std::size_t noise_vocab_size = 200;
  std::uint64_t seed = 0;
  bool strip_lf_tokens_in_test = true;
  int n_background_per_class = 2;
  std::size_t noise_tokens_per_doc = 6;
};

void validate(const SynthSpec& spec);

// Labeling function description as stored in an LF spec file. `label` is a
// class name; `kind` is "keyword" or "regex".
struct LfSpec {
  std::string name;
  std::string kind;
  std::string pattern;
  std::string label;
};

struct SynthCorpora {
  Corpus train;
  Corpus test;
  std::vector<LfSpec> lfs;
};

// Deterministic for a fixed spec. Train instances carry no gold label (they
// are meant to be weakly labelled); test instances do.
SynthCorpora synth_generate(const SynthSpec& spec);

std::string synth_keyword(int cls, int k);
std::string synth_background(int cls, int k);
std::string synth_noise(std::size_t k);

}  // namespace knowman

#endif  // KNOWMAN_DATASET_IO_HPP_
