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

#ifndef KNOWMAN_LF_ENGINE_HPP_
#define KNOWMAN_LF_ENGINE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knowman/dataset_io.hpp"

namespace knowman {

enum class LfKind { keyword, regex };

// A compiled labeling function. Keyword LFs match their lowercased token
// sequence on token boundaries; regex LFs search the raw text, case-sensitive.
class LabelingFunction {
 public:
  int lf_id() const { return lf_id_; }
  const std::string& name() const { return name_; }
  LfKind kind() const { return kind_; }
  const std::string& pattern() const { return pattern_; }
  int output_label() const { return output_label_; }
  const std::vector<std::string>& keyword_tokens() const { return tokens_; }

  bool matches(std::string_view text) const;
  bool matches_tokens(std::span<const std::string> tokens) const;

 private:
  friend LabelingFunction compile_lf(const LfSpec&, std::span<const std::string>, int);

  int lf_id_ = 0;
  std::string name_;
  LfKind kind_ = LfKind::keyword;
  std::string pattern_;
  int output_label_ = 0;
  std::vector<std::string> tokens_;
  std::shared_ptr<const std::regex> regex_;
};

// Throws CompileError for a bad regex and SchemaError for an unknown label,
// unknown kind, or a keyword without any token.
LabelingFunction compile_lf(const LfSpec& spec, std::span<const std::string> label_names,
                            int lf_id);
std::vector<LabelingFunction> compile_lfs(std::span<const LfSpec> specs,
                                          std::span<const std::string> label_names);

// LF spec file: one {"name","kind","pattern","label"} JSON object per line.
std::vector<LfSpec> load_lf_specs(const std::filesystem::path& path);
void save_lf_specs(std::span<const LfSpec> specs, const std::filesystem::path& path);

// rows[i] lists, in increasing order, the LFs firing on instance i.
struct MatchMatrix {
  std::size_t n_instances = 0;
  std::size_t n_lfs = 0;
  std::vector<std::vector<std::uint32_t>> rows;

  bool hit(std::size_t instance, std::size_t lf) const;
  std::size_t nnz() const;
};

MatchMatrix apply_lfs(const Corpus& corpus, std::span<const LabelingFunction> lfs);
MatchMatrix apply_lfs(std::span<const std::string> texts,
                      std::span<const LabelingFunction> lfs);

struct TiePolicy {
  enum class Kind { majority_drop_ties, majority_random_tie };
  Kind kind = Kind::majority_drop_ties;
  std::uint64_t seed = 0;

  static TiePolicy drop_ties() { return {}; }
  static TiePolicy random_tie(std::uint64_t seed) { return {Kind::majority_random_tie, seed}; }
};

// (instance, resolved weak label, firing LF) unit of both training objectives.
struct Triple {
  std::size_t instance = 0;
  int label = 0;
  int lf = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct WeakDataset {
  std::size_t n_instances = 0;
  int n_classes = 0;
  std::size_t n_lfs = 0;
  std::vector<std::optional<int>> weak_labels;
  std::vector<Triple> triples;

  std::size_t n_labeled() const;
};

// Majority vote over the firing LFs' output labels. Only LFs agreeing with the
// winning label produce triples; unmatched and (under drop_ties) tied
// instances stay unlabelled.
WeakDataset resolve_weak_labels(const MatchMatrix& matches,
                                std::span<const LabelingFunction> lfs, int n_classes,
                                TiePolicy policy = {});

struct CoverageStats {
  std::size_t n_instances = 0;
  std::size_t n_labeled = 0;
  double coverage = 0.0;
  std::vector<std::size_t> fire_counts;
  std::vector<std::size_t> triple_counts;
  std::vector<std::size_t> label_distribution;
  std::size_t n_triples = 0;
};

CoverageStats coverage_stats(const WeakDataset& weak, const MatchMatrix& matches);

}  // namespace knowman

#endif  // KNOWMAN_LF_ENGINE_HPP_
