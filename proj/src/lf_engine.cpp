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

#include "knowman/lf_engine.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include "json.hpp"
#include "knowman/error.hpp"
#include "knowman/rng.hpp"
#include "knowman/text_features.hpp"

namespace knowman {
namespace {

using nlohmann::json;

bool starts_at(std::span<const std::string> tokens, std::size_t pos,
               std::span<const std::string> needle) {
  if (pos + needle.size() > tokens.size()) return false;
  return std::equal(needle.begin(), needle.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos));
}

}  // namespace

bool LabelingFunction::matches_tokens(std::span<const std::string> tokens) const {
  for (std::size_t pos = 0; pos < tokens.size(); ++pos)
    if (starts_at(tokens, pos, tokens_)) return true;
  return false;
}

bool LabelingFunction::matches(std::string_view text) const {
  if (kind_ == LfKind::regex)
    return std::regex_search(text.begin(), text.end(), *regex_);
  const auto tokens = tokenize(text);
  return matches_tokens(tokens);
}

LabelingFunction compile_lf(const LfSpec& spec, std::span<const std::string> label_names,
                            int lf_id) {
  LabelingFunction lf;
  lf.lf_id_ = lf_id;
  lf.name_ = spec.name.empty() ? "lf" + std::to_string(lf_id) : spec.name;
  lf.pattern_ = spec.pattern;
  if (spec.pattern.empty()) throw SchemaError("LF '" + lf.name_ + "': empty pattern");

  auto label = std::find(label_names.begin(), label_names.end(), spec.label);
  if (label == label_names.end())
    throw SchemaError("LF '" + lf.name_ + "': unknown label '" + spec.label + "'");
  lf.output_label_ = static_cast<int>(label - label_names.begin());

  if (spec.kind == "keyword") {
    lf.kind_ = LfKind::keyword;
    lf.tokens_ = tokenize(spec.pattern);
    if (lf.tokens_.empty())
      throw SchemaError("LF '" + lf.name_ + "': keyword '" + spec.pattern +
                        "' has no token of length >= 2");
  } else if (spec.kind == "regex") {
    lf.kind_ = LfKind::regex;
    try {
      lf.regex_ = std::make_shared<const std::regex>(spec.pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      const auto excerpt = spec.pattern.substr(0, 40);
      throw CompileError("LF '" + lf.name_ + "': invalid regex '" + excerpt + "': " + e.what());
    }
  } else {
    throw SchemaError("LF '" + lf.name_ + "': unknown kind '" + spec.kind + "'");
  }
  return lf;
}

std::vector<LabelingFunction> compile_lfs(std::span<const LfSpec> specs,
                                          std::span<const std::string> label_names) {
  std::vector<LabelingFunction> lfs;
  lfs.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i)
    lfs.push_back(compile_lf(specs[i], label_names, static_cast<int>(i)));
  return lfs;
}

std::vector<LfSpec> load_lf_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open LF spec file " + path.string());
  std::vector<LfSpec> specs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed LF record: ") + e.what(), lineno);
    }
    auto field = [&](const char* key, bool required) -> std::string {
      auto it = rec.find(key);
      if (it == rec.end() || it->is_null()) {
        if (required) throw ParseError(std::string("LF record lacks \"") + key + "\"", lineno);
        return {};
      }
      if (!it->is_string()) throw ParseError(std::string("\"") + key + "\" must be a string", lineno);
      return it->get<std::string>();
    };
    if (!rec.is_object()) throw ParseError("LF record is not an object", lineno);
    specs.push_back({field("name", false), field("kind", true), field("pattern", true),
                     field("label", true)});
  }
  if (specs.empty()) throw ParseError("no labeling functions in " + path.string(), 0);
  return specs;
}

void save_lf_specs(std::span<const LfSpec> specs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write LF spec file " + path.string());
  for (const auto& s : specs)
    out << json{{"name", s.name}, {"kind", s.kind}, {"pattern", s.pattern}, {"label", s.label}}
               .dump()
        << '\n';
}

bool MatchMatrix::hit(std::size_t instance, std::size_t lf) const {
  const auto& row = rows.at(instance);
  return std::binary_search(row.begin(), row.end(), static_cast<std::uint32_t>(lf));
}

std::size_t MatchMatrix::nnz() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.size();
  return n;
}

MatchMatrix apply_lfs(std::span<const std::string> texts,
                      std::span<const LabelingFunction> lfs) {
  if (lfs.empty()) throw SchemaError("apply_lfs needs at least one labeling function");

  // Keyword LFs are indexed by their first token so each text is scanned once.
  std::unordered_map<std::string, std::vector<std::uint32_t>> by_first;
  std::vector<std::uint32_t> regex_lfs;
  for (std::size_t j = 0; j < lfs.size(); ++j) {
    if (lfs[j].kind() == LfKind::keyword)
      by_first[lfs[j].keyword_tokens().front()].push_back(static_cast<std::uint32_t>(j));
    else
      regex_lfs.push_back(static_cast<std::uint32_t>(j));
  }

  MatchMatrix m;
  m.n_instances = texts.size();
  m.n_lfs = lfs.size();
  m.rows.resize(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto& row = m.rows[i];
    const auto tokens = tokenize(texts[i]);
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
      auto it = by_first.find(tokens[pos]);
      if (it == by_first.end()) continue;
      for (std::uint32_t j : it->second)
        if (starts_at(tokens, pos, lfs[j].keyword_tokens())) row.push_back(j);
    }
    for (std::uint32_t j : regex_lfs)
      if (lfs[j].matches(texts[i])) row.push_back(j);
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return m;
}

MatchMatrix apply_lfs(const Corpus& corpus, std::span<const LabelingFunction> lfs) {
  const auto texts = corpus.texts();
  return apply_lfs(texts, lfs);
}

std::size_t WeakDataset::n_labeled() const {
  return static_cast<std::size_t>(
      std::count_if(weak_labels.begin(), weak_labels.end(), [](const auto& l) { return l.has_value(); }));
}

WeakDataset resolve_weak_labels(const MatchMatrix& matches,
                                std::span<const LabelingFunction> lfs, int n_classes,
                                TiePolicy policy) {
  if (matches.n_lfs != lfs.size()) throw ShapeError("match matrix does not fit the LF list");
  if (n_classes < 2) throw SchemaError("n_classes must be at least 2");
  for (const auto& lf : lfs)
    if (lf.output_label() < 0 || lf.output_label() >= n_classes)
      throw SchemaError("LF '" + lf.name() + "' emits an out-of-range label");

  WeakDataset weak;
  weak.n_instances = matches.n_instances;
  weak.n_classes = n_classes;
  weak.n_lfs = lfs.size();
  weak.weak_labels.resize(matches.n_instances);

  std::vector<int> votes(static_cast<std::size_t>(n_classes));
  std::vector<int> tied;
  for (std::size_t i = 0; i < matches.n_instances; ++i) {
    const auto& row = matches.rows[i];
    if (row.empty()) continue;
    std::fill(votes.begin(), votes.end(), 0);
    for (std::uint32_t j : row) ++votes[static_cast<std::size_t>(lfs[j].output_label())];
    const int best = *std::max_element(votes.begin(), votes.end());
    tied.clear();
    for (int c = 0; c < n_classes; ++c)
      if (votes[static_cast<std::size_t>(c)] == best) tied.push_back(c);

    int label = tied.front();
    if (tied.size() > 1) {
      if (policy.kind == TiePolicy::Kind::majority_drop_ties) continue;
      Rng rng(derive_seed(policy.seed, "tie", i));
      label = tied[uniform_index(rng, tied.size())];
    }
    weak.weak_labels[i] = label;
    for (std::uint32_t j : row)
      if (lfs[j].output_label() == label)
        weak.triples.push_back({i, label, static_cast<int>(j)});
  }
  return weak;
}

CoverageStats coverage_stats(const WeakDataset& weak, const MatchMatrix& matches) {
  CoverageStats s;
  s.n_instances = weak.n_instances;
  s.n_labeled = weak.n_labeled();
  s.coverage = weak.n_instances ? static_cast<double>(s.n_labeled) / static_cast<double>(weak.n_instances) : 0.0;
  s.fire_counts.assign(matches.n_lfs, 0);
  s.triple_counts.assign(weak.n_lfs, 0);
  s.label_distribution.assign(static_cast<std::size_t>(weak.n_classes), 0);
  for (const auto& row : matches.rows)
    for (std::uint32_t j : row) ++s.fire_counts[j];
  for (const auto& t : weak.triples) ++s.triple_counts[static_cast<std::size_t>(t.lf)];
  for (const auto& l : weak.weak_labels)
    if (l) ++s.label_distribution[static_cast<std::size_t>(*l)];
  s.n_triples = weak.triples.size();
  return s;
}

}  // namespace knowman
