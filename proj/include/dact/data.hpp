// Copyright 2026 The dact-cpp Authors
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

/**
 * @file data.hpp
 * @brief Examples, vocabulary, whitespace tokenizer, TSV I/O and the
 *        mixed-difficulty synthetic task.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dact/config.hpp"
#include "dact/model.hpp"
#include "dact/rng.hpp"

namespace dact {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

enum class Difficulty { easy, hard };

inline const char* to_string(Difficulty d) { return d == Difficulty::easy ? "easy" : "hard"; }

struct Example {
  std::string text_a;
  std::optional<std::string> text_b;
  std::size_t label = 0;
  std::optional<Difficulty> difficulty;

  bool operator==(const Example&) const = default;
};

struct Dataset {
  std::vector<Example> examples;
  std::vector<std::string> label_names;

  [[nodiscard]] std::size_t num_classes() const { return label_names.size(); }
  [[nodiscard]] std::size_t size() const { return examples.size(); }
};

inline std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string tok; in >> tok;) out.push_back(std::move(tok));
  return out;
}

/// Token <-> id map. Ids 0..3 are [PAD], [CLS], [UNK], [SEP]; the rest follow
/// descending corpus frequency, ties broken lexicographically.
class Vocab {
 public:
  Vocab() : tokens_{"[PAD]", "[CLS]", "[UNK]", "[SEP]"} { reindex(); }

  static Vocab build(const Dataset& data) {
    std::map<std::string, std::size_t> counts;
    for (const auto& ex : data.examples) {
      for (auto& t : split_whitespace(ex.text_a)) ++counts[t];
      if (ex.text_b)
        for (auto& t : split_whitespace(*ex.text_b)) ++counts[t];
    }
    std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto& l, const auto& r) { return l.second > r.second; });
    Vocab v;
    for (auto& [tok, n] : ordered) {
      if (v.index_.contains(tok)) continue;
      v.tokens_.push_back(tok);
    }
    v.reindex();
    return v;
  }

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }

  [[nodiscard]] std::size_t id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  [[nodiscard]] const std::string& token(std::size_t id) const { return tokens_.at(id); }

  /// One token per line, line i holding id i.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocab file " + path);
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocab file " + path);
    Vocab v;
    v.tokens_.clear();
    for (std::string line; std::getline(in, line);) v.tokens_.push_back(line);
    if (v.tokens_.size() < 4 || v.tokens_[kPadId] != "[PAD]" || v.tokens_[kClsId] != "[CLS]" ||
        v.tokens_[kUnkId] != "[UNK]" || v.tokens_[kSepId] != "[SEP]") {
      throw DataError("vocab file " + path + " does not start with the reserved tokens");
    }
    v.reindex();
    return v;
  }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// [CLS] a... ([SEP] b...) padded with [PAD] to exactly max_len. Pairs are
/// trimmed from the longer side first so the separator always survives.
inline std::vector<std::size_t> tokenize(const Example& ex, const Vocab& vocab, std::size_t max_len) {
  std::vector<std::size_t> a, b;
  for (auto& t : split_whitespace(ex.text_a)) a.push_back(vocab.id(t));
  if (ex.text_b)
    for (auto& t : split_whitespace(*ex.text_b)) b.push_back(vocab.id(t));
  std::vector<std::size_t> out{kClsId};
  if (ex.text_b && max_len >= 2) {
    const std::size_t budget = max_len - 2;
    while (a.size() + b.size() > budget) (a.size() >= b.size() ? a : b).pop_back();
    out.insert(out.end(), a.begin(), a.end());
    out.push_back(kSepId);
    out.insert(out.end(), b.begin(), b.end());
  } else {
    out.insert(out.end(), a.begin(), a.end());
  }
  if (max_len == 0) return {};
  out.resize(std::min(out.size(), max_len));
  out.resize(max_len, kPadId);
  return out;
}

/// Ids with trailing [PAD] removed. Masked keys contribute exact zeros, so the
/// classification-token states are bitwise unchanged; only cost drops.
inline std::vector<std::size_t> strip_padding(std::vector<std::size_t> ids) {
  while (ids.size() > 1 && ids.back() == kPadId) ids.pop_back();
  return ids;
}

struct TokenizedExample {
  std::vector<std::size_t> ids;
  std::size_t label = 0;
  std::optional<Difficulty> difficulty;
};

inline std::vector<TokenizedExample> encode_dataset(const Dataset& data, const Vocab& vocab, std::size_t max_len) {
  std::vector<TokenizedExample> out;
  out.reserve(data.size());
  for (const auto& ex : data.examples) out.push_back({tokenize(ex, vocab, max_len), ex.label, ex.difficulty});
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic task
// ---------------------------------------------------------------------------

/// Parameters of the synthetic task families. Only "marker-depth" exists.
/// Easy examples carry the class marker `m<c>` in one of the first two slots.
/// Hard examples have no marker; instead `hard_cues` cue tokens `c<k>` are
/// scattered among filler words `w<k>`, each naming the true class with
/// probability `cue_reliability` and a uniformly chosen wrong class otherwise,
/// so the label can only be inferred by pooling the whole sequence.
struct SyntheticSpec {
  std::string family = "marker-depth";
  std::size_t num_classes = 2;
  double hard_fraction = 0.3;
  std::size_t min_tokens = 8;
  std::size_t max_tokens = 14;
  std::size_t filler_words = 10;
  double easy_cue_rate = 0.15;  // chance an easy-example filler slot holds a random cue instead
  std::size_t hard_cues = 5;
  double cue_reliability = 0.75;
};

inline Dataset gen_synthetic(std::uint64_t seed, std::size_t n_examples, const SyntheticSpec& spec = {}) {
  if (spec.family != "marker-depth") throw ConfigError("unknown synthetic task family '" + spec.family + "'");
  if (spec.num_classes < 2) throw ConfigError("synthetic task needs at least two classes");
  if (spec.min_tokens < std::max<std::size_t>(spec.hard_cues, 2) || spec.max_tokens < spec.min_tokens) {
    throw ConfigError("synthetic length range too short for the hard-example cues");
  }
  if (!(spec.hard_fraction >= 0.0 && spec.hard_fraction <= 1.0)) throw ConfigError("hard_fraction outside [0,1]");
  if (spec.filler_words < 1) throw ConfigError("synthetic task needs at least one filler word");
  if (!(spec.cue_reliability >= 0.0 && spec.cue_reliability <= 1.0)) throw ConfigError("cue_reliability outside [0,1]");

  Rng rng(seed);
  Dataset data;
  for (std::size_t c = 0; c < spec.num_classes; ++c) data.label_names.push_back(std::to_string(c));

  const auto n_hard = std::min<std::size_t>(
      n_examples, static_cast<std::size_t>(std::llround(spec.hard_fraction * static_cast<double>(n_examples))));
  std::vector<char> hard(n_examples, 0);
  std::fill_n(hard.begin(), n_hard, 1);
  rng.shuffle(std::span<char>(hard));

  const auto pick = [&rng](std::size_t n) { return static_cast<std::size_t>(rng.below(n)); };
  const auto filler = [&] { return "w" + std::to_string(pick(spec.filler_words)); };
  const auto cue = [](std::size_t c) { return "c" + std::to_string(c); };

  std::vector<std::size_t> order(n_examples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  data.examples.reserve(n_examples);
  for (std::size_t i = 0; i < n_examples; ++i) {
    const std::size_t label = order[i] % spec.num_classes;
    const std::size_t len = spec.min_tokens + pick(spec.max_tokens - spec.min_tokens + 1);
    std::vector<std::string> tokens(len);
    Example ex;
    ex.label = label;
    if (hard[i]) {
      ex.difficulty = Difficulty::hard;
      for (auto& t : tokens) t = filler();
      std::vector<std::string> cues;
      for (std::size_t k = 0; k < spec.hard_cues; ++k) {
        std::size_t c = label;
        if (!rng.bernoulli(spec.cue_reliability)) {
          c = pick(spec.num_classes - 1);
          if (c >= label) ++c;
        }
        cues.push_back(cue(c));
      }
      std::vector<std::size_t> slots(len);
      std::iota(slots.begin(), slots.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(slots));
      for (std::size_t k = 0; k < cues.size(); ++k) tokens[slots[k]] = cues[k];
    } else {
      ex.difficulty = Difficulty::easy;
      for (auto& t : tokens) t = rng.bernoulli(spec.easy_cue_rate) ? cue(pick(spec.num_classes)) : filler();
      tokens[pick(2)] = "m" + std::to_string(label);
    }
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      if (k) ex.text_a += ' ';
      ex.text_a += tokens[k];
    }
    data.examples.push_back(std::move(ex));
  }
  return data;
}

/// Content-hash split: an example goes to validation iff
/// fnv1a(text_a \t text_b) mod 100 < validation_percent.
inline std::pair<Dataset, Dataset> split_train_validation(const Dataset& data, unsigned validation_percent = 20) {
  Dataset train, valid;
  train.label_names = valid.label_names = data.label_names;
  for (const auto& ex : data.examples) {
    const std::string key = ex.text_a + '\t' + ex.text_b.value_or("");
    (fnv1a(key) % 100 < validation_percent ? valid : train).examples.push_back(ex);
  }
  return {std::move(train), std::move(valid)};
}

// ---------------------------------------------------------------------------
// TSV
// ---------------------------------------------------------------------------

/// Column names to read. Empty label_names means labels are taken in order
/// of first appearance.
struct TsvSchema {
  std::string text_a = "text_a";
  std::optional<std::string> text_b;
  std::string label = "label";
  std::optional<std::string> difficulty = "difficulty";  // read when present in the header
  std::vector<std::string> label_names;
};

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

inline Dataset read_tsv(std::istream& in, const TsvSchema& schema, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(source + ": missing header line");
  const auto header = split_tabs(line);
  const auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto required = [&](const std::string& name) {
    auto c = column(name);
    if (!c) throw SchemaError(source + ": missing column '" + name + "'");
    return *c;
  };
  const std::size_t col_a = required(schema.text_a);
  const std::size_t col_label = required(schema.label);
  const std::optional<std::size_t> col_b = schema.text_b ? std::optional(required(*schema.text_b)) : std::nullopt;
  const std::optional<std::size_t> col_diff = schema.difficulty ? column(*schema.difficulty) : std::nullopt;

  Dataset data;
  data.label_names = schema.label_names;
  const bool infer_labels = schema.label_names.empty();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_tabs(line);
    if (fields.size() != header.size()) {
      throw DataError(source + ": line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    Example ex;
    ex.text_a = fields[col_a];
    if (col_b) ex.text_b = fields[*col_b];
    const std::string& label = fields[col_label];
    auto it = std::find(data.label_names.begin(), data.label_names.end(), label);
    if (it == data.label_names.end()) {
      if (!infer_labels) {
        throw DataError(source + ": line " + std::to_string(line_no) + ": unknown label '" + label + "'");
      }
      data.label_names.push_back(label);
      it = data.label_names.end() - 1;
    }
    ex.label = static_cast<std::size_t>(it - data.label_names.begin());
    if (col_diff) {
      const std::string& d = fields[*col_diff];
      if (d == "easy") {
        ex.difficulty = Difficulty::easy;
      } else if (d == "hard") {
        ex.difficulty = Difficulty::hard;
      } else if (!d.empty()) {
        throw DataError(source + ": line " + std::to_string(line_no) + ": unknown difficulty '" + d + "'");
      }
    }
    data.examples.push_back(std::move(ex));
  }
  return data;
}

inline Dataset load_tsv(const std::string& path, const TsvSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_tsv(in, schema, path);
}

/// Header text_a[\ttext_b]\tlabel\tdifficulty; text_b is written when any example has one.
inline void write_tsv(std::ostream& out, const Dataset& data) {
  const bool pairs = std::any_of(data.examples.begin(), data.examples.end(),
                                 [](const Example& e) { return e.text_b.has_value(); });
  out << "text_a" << (pairs ? "\ttext_b" : "") << "\tlabel\tdifficulty\n";
  for (const auto& ex : data.examples) {
    if (ex.text_a.find_first_of("\t\n") != std::string::npos ||
        ex.text_b.value_or("").find_first_of("\t\n") != std::string::npos) {
      throw DataError("text contains a tab or newline");
    }
    out << ex.text_a;
    if (pairs) out << '\t' << ex.text_b.value_or("");
    out << '\t' << data.label_names.at(ex.label) << '\t' << (ex.difficulty ? to_string(*ex.difficulty) : "") << '\n';
  }
}

inline void save_tsv(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_tsv(out, data);
}

}  // namespace dact
