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

#include "knowman/text_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "knowman/dataset_io.hpp"
#include "knowman/error.hpp"

namespace knowman {
namespace {

constexpr std::string_view kVocabMagic = "knowman-vocab";
constexpr int kVocabVersion = 1;

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         c >= 0x80;
}

char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::string tok;
    while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j])))
      tok.push_back(lower(static_cast<unsigned char>(text[j++])));
    if (tok.size() >= 2) tokens.push_back(std::move(tok));
    i = j;
  }
  return tokens;
}

Vocabulary Vocabulary::fit(std::span<const std::string> texts,
                           const VectorizerOptions& options) {
  if (texts.empty()) throw SchemaError("cannot fit a vocabulary on an empty corpus");
  if (!(options.max_df > 0.0 && options.max_df <= 1.0))
    throw SchemaError("max_df must lie in (0, 1]");

  std::map<std::string, std::size_t> df;  // ordered: lexicographic term order
  std::vector<std::string> seen;
  for (const auto& text : texts) {
    seen = tokenize(text);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (auto& tok : seen) ++df[std::move(tok)];
  }

  const double n = static_cast<double>(texts.size());
  const double max_docs = options.max_df * n;
  Vocabulary vocab;
  vocab.n_fit_ = texts.size();
  vocab.options_ = options;
  for (const auto& [term, count] : df) {
    if (count < options.min_df || static_cast<double>(count) > max_docs) continue;
    vocab.terms_.push_back(term);
    vocab.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  if (vocab.terms_.empty()) throw SchemaError("empty vocabulary");
  vocab.rebuild_index();
  return vocab;
}

void Vocabulary::rebuild_index() {
  index_.clear();
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], i);
}

std::optional<std::size_t> Vocabulary::index(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  out << kVocabMagic << ' ' << kVocabVersion << ' ' << n_fit_ << ' ' << options_.min_df
      << ' ' << format_double(options_.max_df) << ' ' << terms_.size() << '\n';
  for (std::size_t i = 0; i < terms_.size(); ++i)
    out << terms_[i] << '\t' << i << '\t' << format_double(idf_[i]) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty vocabulary file", 1);
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  Vocabulary vocab;
  header >> magic >> version >> vocab.n_fit_ >> vocab.options_.min_df >>
      vocab.options_.max_df >> count;
  if (!header || magic != kVocabMagic) throw ParseError("not a vocabulary file", 1);
  if (version != kVocabVersion)
    throw ParseError("unsupported vocabulary version " + std::to_string(version), 1);

  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ParseError("truncated vocabulary", i + 2);
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw ParseError("malformed vocabulary entry", i + 2);
    std::size_t idx = 0;
    double idf = 0.0;
    try {
      idx = std::stoull(line.substr(t1 + 1, t2 - t1 - 1));
      idf = std::stod(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw ParseError("malformed vocabulary entry", i + 2);
    }
    if (idx != i) throw ParseError("vocabulary indices must be dense", i + 2);
    vocab.terms_.push_back(line.substr(0, t1));
    vocab.idf_.push_back(idf);
  }
  vocab.rebuild_index();
  return vocab;
}

Vocabulary fit_vectorizer(const Corpus& corpus, const VectorizerOptions& options) {
  const auto texts = corpus.texts();
  return Vocabulary::fit(texts, options);
}

FeatureMatrix vectorize(std::span<const std::string> texts, const Vocabulary& vocab) {
  FeatureMatrix m;
  m.dim = vocab.size();
  m.rows.reserve(texts.size());
  std::map<std::uint32_t, double> counts;
  for (const auto& text : texts) {
    counts.clear();
    for (const auto& tok : tokenize(text))
      if (auto idx = vocab.index(tok)) counts[static_cast<std::uint32_t>(*idx)] += 1.0;

    SparseVector row;
    double norm2 = 0.0;
    for (const auto& [idx, tf] : counts) {
      const double w = tf * vocab.idf()[idx];
      row.indices.push_back(idx);
      row.values.push_back(w);
      norm2 += w * w;
    }
    if (row.empty()) {
      ++m.zero_rows;
    } else {
      const double norm = std::sqrt(norm2);
      for (auto& v : row.values) v /= norm;
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

FeatureMatrix vectorize(const Corpus& corpus, const Vocabulary& vocab) {
  const auto texts = corpus.texts();
  return vectorize(texts, vocab);
}

}  // namespace knowman
