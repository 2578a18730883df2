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

#ifndef KNOWMAN_TEXT_FEATURES_HPP_
#define KNOWMAN_TEXT_FEATURES_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace knowman {

struct Corpus;

// Lowercased maximal runs of word characters, keeping runs of length >= 2.
// Word characters are ASCII letters and digits plus any byte >= 0x80, so
// UTF-8 encoded letters stay inside their token.
std::vector<std::string> tokenize(std::string_view text);

struct VectorizerOptions {
  std::size_t min_df = 1;
  // Terms in more than max_df * N documents are dropped.
  double max_df = 1.0;
};

// Fitted TF-IDF vocabulary. Terms are sorted lexicographically and indexed
// densely; idf(t) = ln((1 + N) / (1 + df(t))) + 1.
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary fit(std::span<const std::string> texts,
                        const VectorizerOptions& options = {});

  std::size_t size() const { return terms_.size(); }
  std::optional<std::size_t> index(std::string_view term) const;
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<double>& idf() const { return idf_; }
  std::size_t fitted_on() const { return n_fit_; }
  const VectorizerOptions& options() const { return options_; }

  // Versioned text file: header line, then "term<TAB>index<TAB>idf" per term.
  // idf values are written with 17 significant digits and round-trip exactly.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.terms_ == b.terms_ && a.idf_ == b.idf_ && a.n_fit_ == b.n_fit_;
  }

 private:
  void rebuild_index();

  std::vector<std::string> terms_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t n_fit_ = 0;
  VectorizerOptions options_;
};

Vocabulary fit_vectorizer(const Corpus& corpus, const VectorizerOptions& options = {});

// Sparse row with strictly increasing indices.
struct SparseVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::size_t nnz() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
};

struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<SparseVector> rows;
  // Rows with no in-vocabulary token; they are kept as zero rows.
  std::size_t zero_rows = 0;

  std::size_t size() const { return rows.size(); }
};

// Raw term count times idf, then L2 row normalisation.
FeatureMatrix vectorize(std::span<const std::string> texts, const Vocabulary& vocab);
FeatureMatrix vectorize(const Corpus& corpus, const Vocabulary& vocab);

}  // namespace knowman

#endif  // KNOWMAN_TEXT_FEATURES_HPP_
