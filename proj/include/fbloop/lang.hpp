/*
 * Copyright 2026 The fbloop Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "fbloop/domain.hpp"

namespace fbloop::lang {

using Sentence = std::vector<std::string>;

inline constexpr const char* kBos = "<s>";
inline constexpr const char* kEos = "</s>";
inline constexpr const char* kUnk = "<unk>";

// Tri-gram model over sentences padded with two start markers and one end
// marker. Probabilities follow stupid backoff (tri -> bi -> uni, each
// backoff scaled by alpha) over Lidstone-smoothed unigrams, renormalized
// per context so every conditional distribution sums to one. A context that
// was never seen defers to the next lower order unchanged.
class TrigramLm {
 public:
  static TrigramLm Train(const std::vector<Sentence>& corpus, double k = 0.01,
                         double alpha = 0.4);

  // P(w | u v). Unknown tokens map to <unk>.
  double Probability(const std::string& w, const std::string& u,
                     const std::string& v) const;

  // exp(-(1/N) sum log P), N = content tokens + end marker. +inf when a
  // token has zero probability (only possible with k = 0).
  double Perplexity(const Sentence& sentence) const;

  // Predictable vocabulary: corpus tokens, <unk>, </s>; sorted.
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  double k() const { return k_; }
  double alpha() const { return alpha_; }

  nlohmann::json ToJson() const;
  static TrigramLm FromJson(const nlohmann::json& j);

 private:
  using Id = std::uint32_t;
  Id Lookup(const std::string& token) const;
  double Unigram(Id w) const;
  double Bigram(Id w, Id v) const;
  double Trigram(Id w, Id u, Id v) const;
  void Finalize();

  double k_ = 0.01;
  double alpha_ = 0.4;
  std::vector<std::string> vocab_;  // predictable tokens
  std::unordered_map<std::string, Id> ids_;  // includes <s>
  Id bos_ = 0, eos_ = 0, unk_ = 0;
  long total_ = 0;  // predicted-token count
  std::map<Id, long> uni_;
  std::map<std::pair<Id, Id>, long> bi_;
  std::map<std::tuple<Id, Id, Id>, long> tri_;
  std::map<Id, long> bi_ctx_;
  std::map<std::pair<Id, Id>, long> tri_ctx_;
  std::map<Id, double> bi_norm_;
  std::map<std::pair<Id, Id>, double> tri_norm_;
};

// Whitespace-tokenized corpus, one sentence per line; blank lines skipped.
std::vector<Sentence> ReadCorpus(const std::string& path);
Sentence Tokenize(const std::string& line);

struct TrendSeries {
  std::vector<double> window_start_h;
  // Mean PP per window; nullopt marks an empty window.
  std::map<std::string, std::vector<std::optional<double>>> series;
  std::map<std::string, std::vector<long>> counts;
  std::optional<double> retained_mean;
  std::optional<double> dropout_mean;

  // CSV: window_start_h,<series>... with empty cells for gaps.
  std::string ToCsv() const;
};

// Mean perplexity per cohort (`new`, `existing`) and per new-user subgroup
// (`retained`, `dropout`) over consecutive windows starting at origin_h.
TrendSeries CohortPpTrend(const std::vector<domain::InteractionRecord>& log,
                          const std::vector<domain::CohortAssignment>& cohorts,
                          const TrigramLm& lm, double window_days,
                          double origin_h, double end_h);

// Pairwise diversities: mean over unordered pairs of (1 - similarity).
// All throw DomainError for fewer than two sentences.
double BleuScore(const Sentence& hypothesis, const Sentence& reference);
double SelfBleuDiversity(const std::vector<Sentence>& sentences);
double JaccardDiversity(const std::vector<Sentence>& sentences);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  void Add(const std::string& token, std::vector<double> vec);
  // Text format: `token v1 ... vd` per line.
  static EmbeddingTable Read(const std::string& path);
  // Falls back to the <unk> entry; throws DomainError when neither exists.
  const std::vector<double>& Lookup(const std::string& token) const;
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

// Similarity is the cosine of mean-pooled sentence embeddings, floored at 0.
double WedDiversity(const std::vector<Sentence>& sentences,
                    const EmbeddingTable& table);

// Rows: helpful / unhelpful; columns: high / low perplexity.
struct ContingencyTable2x2 {
  long helpful_high = 0;
  long helpful_low = 0;
  long unhelpful_high = 0;
  long unhelpful_low = 0;

  // Unhelpful share within each perplexity column.
  double UnhelpfulRateHigh() const;
  double UnhelpfulRateLow() const;
};

struct ChiSquaredResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Pearson statistic without continuity correction, 1 degree of freedom.
ChiSquaredResult ChiSquared2x2(const ContingencyTable2x2& table);

// Splits scored interactions at `threshold` (high = PP > threshold).
ContingencyTable2x2 BuildContingency(std::span<const double> perplexity,
                                     std::span<const int> unhelpful,
                                     double threshold);

}  // namespace fbloop::lang
