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
#include "fbloop/lang.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "fbloop/error.hpp"
#include "fbloop/format.hpp"

namespace fbloop::lang {

TrigramLm TrigramLm::Train(const std::vector<Sentence>& corpus, double k,
                           double alpha) {
  if (corpus.empty()) throw DomainError("train: empty corpus");
  if (!(k >= 0.0)) throw DomainError("train: Lidstone k must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw DomainError("train: alpha must be in [0, 1]");
  }
  TrigramLm lm;
  lm.k_ = k;
  lm.alpha_ = alpha;
  std::set<std::string> words = {kEos, kUnk};
  for (const auto& s : corpus) {
    for (const auto& w : s) {
      if (w == kBos || w == kEos) {
        throw DomainError("train: corpus contains a reserved marker");
      }
      words.insert(w);
    }
  }
  lm.vocab_.assign(words.begin(), words.end());
  for (Id i = 0; i < lm.vocab_.size(); ++i) lm.ids_[lm.vocab_[i]] = i;
  lm.bos_ = static_cast<Id>(lm.vocab_.size());
  lm.ids_[kBos] = lm.bos_;
  lm.eos_ = lm.ids_.at(kEos);
  lm.unk_ = lm.ids_.at(kUnk);

  for (const auto& s : corpus) {
    std::vector<Id> p = {lm.bos_, lm.bos_};
    for (const auto& w : s) p.push_back(lm.ids_.at(w));
    p.push_back(lm.eos_);
    for (std::size_t i = 2; i < p.size(); ++i) {
      ++lm.uni_[p[i]];
      ++lm.bi_[{p[i - 1], p[i]}];
      ++lm.tri_[{p[i - 2], p[i - 1], p[i]}];
      ++lm.total_;
    }
  }
  lm.Finalize();
  return lm;
}

void TrigramLm::Finalize() {
  bi_ctx_.clear();
  tri_ctx_.clear();
  bi_norm_.clear();
  tri_norm_.clear();
  for (const auto& [key, c] : bi_) bi_ctx_[key.first] += c;
  for (const auto& [key, c] : tri_) {
    tri_ctx_[{std::get<0>(key), std::get<1>(key)}] += c;
  }
  // Z(v) = 1 + alpha * (1 - sum over seen continuations of the lower order).
  std::map<Id, double> seen_mass;
  for (const auto& [key, c] : bi_) seen_mass[key.first] += Unigram(key.second);
  for (const auto& [v, m] : seen_mass) bi_norm_[v] = 1.0 + alpha_ * (1.0 - m);
  std::map<std::pair<Id, Id>, double> seen_mass3;
  for (const auto& [key, c] : tri_) {
    const auto [u, v, w] = key;
    seen_mass3[{u, v}] += Bigram(w, v);
  }
  for (const auto& [ctx, m] : seen_mass3) tri_norm_[ctx] = 1.0 + alpha_ * (1.0 - m);
}

TrigramLm::Id TrigramLm::Lookup(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? unk_ : it->second;
}

double TrigramLm::Unigram(Id w) const {
  auto it = uni_.find(w);
  const double c = it == uni_.end() ? 0.0 : static_cast<double>(it->second);
  const double denom =
      static_cast<double>(total_) + k_ * static_cast<double>(vocab_.size());
  return (c + k_) / denom;
}

double TrigramLm::Bigram(Id w, Id v) const {
  auto ctx = bi_ctx_.find(v);
  if (ctx == bi_ctx_.end()) return Unigram(w);
  auto it = bi_.find({v, w});
  const double score =
      it != bi_.end()
          ? static_cast<double>(it->second) / static_cast<double>(ctx->second)
          : alpha_ * Unigram(w);
  return score / bi_norm_.at(v);
}

double TrigramLm::Trigram(Id w, Id u, Id v) const {
  auto ctx = tri_ctx_.find({u, v});
  if (ctx == tri_ctx_.end()) return Bigram(w, v);
  auto it = tri_.find({u, v, w});
  const double score =
      it != tri_.end()
          ? static_cast<double>(it->second) / static_cast<double>(ctx->second)
          : alpha_ * Bigram(w, v);
  return score / tri_norm_.at({u, v});
}

double TrigramLm::Probability(const std::string& w, const std::string& u,
                              const std::string& v) const {
  if (w == kBos) return 0.0;
  return Trigram(Lookup(w), Lookup(u), Lookup(v));
}

double TrigramLm::Perplexity(const Sentence& sentence) const {
  if (sentence.empty()) throw DomainError("perplexity: empty sentence");
  std::vector<Id> p = {bos_, bos_};
  for (const auto& w : sentence) p.push_back(Lookup(w));
  p.push_back(eos_);
  double log_sum = 0.0;
  for (std::size_t i = 2; i < p.size(); ++i) {
    const double prob = Trigram(p[i], p[i - 2], p[i - 1]);
    if (!(prob > 0.0)) return std::numeric_limits<double>::infinity();
    log_sum += std::log(prob);
  }
  const double n = static_cast<double>(p.size() - 2);
  return std::exp(-log_sum / n);
}

nlohmann::json TrigramLm::ToJson() const {
  // Counts are written with token strings so the dump is self-describing.
  auto name = [&](Id id) -> const std::string& {
    static const std::string bos = kBos;
    return id == bos_ ? bos : vocab_[id];
  };
  nlohmann::json uni = nlohmann::json::array();
  for (const auto& [w, c] : uni_) uni.push_back({name(w), c});
  nlohmann::json bi = nlohmann::json::array();
  for (const auto& [key, c] : bi_) bi.push_back({name(key.first), name(key.second), c});
  nlohmann::json tri = nlohmann::json::array();
  for (const auto& [key, c] : tri_) {
    tri.push_back({name(std::get<0>(key)), name(std::get<1>(key)),
                   name(std::get<2>(key)), c});
  }
  return {{"format", "fbloop.trigram.v1"},
          {"k", k_},
          {"alpha", alpha_},
          {"vocabulary", vocab_},
          {"total", total_},
          {"unigrams", uni},
          {"bigrams", bi},
          {"trigrams", tri}};
}

TrigramLm TrigramLm::FromJson(const nlohmann::json& j) {
  if (j.value("format", "") != "fbloop.trigram.v1") {
    throw ValidationError("language model: unsupported format");
  }
  TrigramLm lm;
  try {
    lm.k_ = j.at("k").get<double>();
    lm.alpha_ = j.at("alpha").get<double>();
    lm.vocab_ = j.at("vocabulary").get<std::vector<std::string>>();
    lm.total_ = j.at("total").get<long>();
    for (Id i = 0; i < lm.vocab_.size(); ++i) lm.ids_[lm.vocab_[i]] = i;
    lm.bos_ = static_cast<Id>(lm.vocab_.size());
    lm.ids_[kBos] = lm.bos_;
    lm.eos_ = lm.ids_.at(kEos);
    lm.unk_ = lm.ids_.at(kUnk);
    auto id = [&](const nlohmann::json& v) { return lm.ids_.at(v.get<std::string>()); };
    for (const auto& e : j.at("unigrams")) lm.uni_[id(e[0])] = e[1].get<long>();
    for (const auto& e : j.at("bigrams")) lm.bi_[{id(e[0]), id(e[1])}] = e[2].get<long>();
    for (const auto& e : j.at("trigrams")) {
      lm.tri_[{id(e[0]), id(e[1]), id(e[2])}] = e[3].get<long>();
    }
  } catch (const std::exception& e) {
    throw ValidationError(std::string("language model: malformed dump: ") + e.what());
  }
  lm.Finalize();
  return lm;
}

Sentence Tokenize(const std::string& line) {
  std::istringstream in(line);
  Sentence out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<Sentence> ReadCorpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    auto s = Tokenize(line);
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

TrendSeries CohortPpTrend(const std::vector<domain::InteractionRecord>& log,
                          const std::vector<domain::CohortAssignment>& cohorts,
                          const TrigramLm& lm, double window_days,
                          double origin_h, double end_h) {
  if (!(window_days > 0.0)) throw DomainError("trend: window must be positive");
  if (!(end_h > origin_h)) throw DomainError("trend: end must follow origin");
  const double width = 24.0 * window_days;
  const auto windows = static_cast<std::size_t>(std::ceil((end_h - origin_h) / width));

  std::unordered_map<std::string, const domain::CohortAssignment*> by_user;
  for (const auto& c : cohorts) by_user[c.user_id] = &c;

  const std::vector<std::string> names = {"new", "existing", "retained", "dropout"};
  std::map<std::string, std::vector<double>> sums;
  TrendSeries out;
  for (const auto& n : names) {
    sums[n].assign(windows, 0.0);
    out.counts[n].assign(windows, 0);
  }
  double ret_sum = 0.0, drop_sum = 0.0;
  long ret_n = 0, drop_n = 0;
  for (const auto& r : log) {
    if (r.timestamp_h < origin_h || r.timestamp_h >= end_h) continue;
    auto it = by_user.find(r.user_id);
    if (it == by_user.end()) continue;
    const auto w = static_cast<std::size_t>((r.timestamp_h - origin_h) / width);
    const double pp = lm.Perplexity(r.tokens);
    const auto& a = *it->second;
    const std::string cohort(domain::ToString(a.cohort));
    sums[cohort][w] += pp;
    ++out.counts[cohort][w];
    if (a.subgroup == domain::Subgroup::kRetained) {
      sums["retained"][w] += pp;
      ++out.counts["retained"][w];
      ret_sum += pp;
      ++ret_n;
    } else if (a.subgroup == domain::Subgroup::kDropout) {
      sums["dropout"][w] += pp;
      ++out.counts["dropout"][w];
      drop_sum += pp;
      ++drop_n;
    }
  }
  for (std::size_t w = 0; w < windows; ++w) {
    out.window_start_h.push_back(origin_h + width * static_cast<double>(w));
  }
  for (const auto& n : names) {
    auto& s = out.series[n];
    for (std::size_t w = 0; w < windows; ++w) {
      const long c = out.counts[n][w];
      s.push_back(c > 0 ? std::optional<double>(sums[n][w] / c) : std::nullopt);
    }
  }
  if (ret_n > 0) out.retained_mean = ret_sum / ret_n;
  if (drop_n > 0) out.dropout_mean = drop_sum / drop_n;
  return out;
}

std::string TrendSeries::ToCsv() const {
  std::string out = "window_start_h";
  for (const auto& [name, s] : series) out += "," + name;
  out += '\n';
  for (std::size_t w = 0; w < window_start_h.size(); ++w) {
    out += FormatDouble(window_start_h[w]);
    for (const auto& [name, s] : series) {
      out += ',';
      if (s[w]) out += FormatDouble(*s[w]);
    }
    out += '\n';
  }
  return out;
}

namespace {

void RequirePairs(const std::vector<Sentence>& sentences) {
  if (sentences.size() < 2) throw DomainError("diversity: need at least two sentences");
}

template <typename Similarity>
double MeanPairDiversity(const std::vector<Sentence>& sentences, Similarity sim) {
  RequirePairs(sentences);
  double sum = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    for (std::size_t j = i + 1; j < sentences.size(); ++j) {
      sum += 1.0 - sim(i, j);
      ++pairs;
    }
  }
  return std::clamp(sum / static_cast<double>(pairs), 0.0, 1.0);
}

std::map<Sentence, long> NgramCounts(const Sentence& s, std::size_t n) {
  std::map<Sentence, long> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[Sentence(s.begin() + static_cast<long>(i),
                      s.begin() + static_cast<long>(i + n))];
  }
  return counts;
}

}  // namespace

double BleuScore(const Sentence& hyp, const Sentence& ref) {
  constexpr double kEpsilon = 1e-9;
  if (hyp.empty() || ref.empty()) return 0.0;
  const std::size_t orders = std::min<std::size_t>(4, hyp.size());
  double log_p = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const auto h = NgramCounts(hyp, n);
    const auto r = NgramCounts(ref, n);
    long matches = 0, total = 0;
    for (const auto& [g, c] : h) {
      total += c;
      auto it = r.find(g);
      if (it != r.end()) matches += std::min(c, it->second);
    }
    const double p = matches > 0 ? static_cast<double>(matches) / total
                                 : kEpsilon / static_cast<double>(total);
    log_p += std::log(p) / static_cast<double>(orders);
  }
  const double hl = static_cast<double>(hyp.size());
  const double rl = static_cast<double>(ref.size());
  const double bp = hl > rl ? 1.0 : std::exp(1.0 - rl / hl);
  return bp * std::exp(log_p);
}

double SelfBleuDiversity(const std::vector<Sentence>& sentences) {
  return MeanPairDiversity(sentences, [&](std::size_t i, std::size_t j) {
    return 0.5 * (BleuScore(sentences[i], sentences[j]) +
                  BleuScore(sentences[j], sentences[i]));
  });
}

double JaccardDiversity(const std::vector<Sentence>& sentences) {
  std::vector<std::set<std::string>> sets;
  for (const auto& s : sentences) sets.emplace_back(s.begin(), s.end());
  return MeanPairDiversity(sentences, [&](std::size_t i, std::size_t j) {
    std::size_t inter = 0;
    for (const auto& t : sets[i]) inter += sets[j].count(t);
    const std::size_t uni = sets[i].size() + sets[j].size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  });
}

void EmbeddingTable::Add(const std::string& token, std::vector<double> vec) {
  if (vec.empty()) throw ValidationError("embeddings: empty vector for `" + token + "`");
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_) {
    throw ValidationError("embeddings: `" + token + "` has dimension " +
                          std::to_string(vec.size()) + ", expected " +
                          std::to_string(dim_));
  }
  for (double v : vec) {
    if (!std::isfinite(v)) throw ValidationError("embeddings: non-finite entry for `" + token + "`");
  }
  table_[token] = std::move(vec);
}

EmbeddingTable EmbeddingTable::Read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  EmbeddingTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> vec;
    std::string field;
    while (ls >> field) {
      double v;
      auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw ValidationError(path + ":" + std::to_string(lineno) +
                              ": bad number `" + field + "`");
      }
      vec.push_back(v);
    }
    t.Add(token, std::move(vec));
  }
  return t;
}

const std::vector<double>& EmbeddingTable::Lookup(const std::string& token) const {
  auto it = table_.find(token);
  if (it != table_.end()) return it->second;
  it = table_.find(kUnk);
  if (it != table_.end()) return it->second;
  throw DomainError("embeddings: no vector for `" + token + "` and no <unk> entry");
}

double WedDiversity(const std::vector<Sentence>& sentences,
                    const EmbeddingTable& table) {
  RequirePairs(sentences);
  std::vector<std::vector<double>> pooled;
  for (const auto& s : sentences) {
    std::vector<double> m(table.dim(), 0.0);
    for (const auto& tok : s) {
      const auto& v = table.Lookup(tok);
      for (std::size_t d = 0; d < m.size(); ++d) m[d] += v[d];
    }
    if (!s.empty()) {
      for (auto& x : m) x /= static_cast<double>(s.size());
    }
    pooled.push_back(std::move(m));
  }
  return MeanPairDiversity(sentences, [&](std::size_t i, std::size_t j) {
    double dot = 0.0, ni = 0.0, nj = 0.0;
    for (std::size_t d = 0; d < table.dim(); ++d) {
      dot += pooled[i][d] * pooled[j][d];
      ni += pooled[i][d] * pooled[i][d];
      nj += pooled[j][d] * pooled[j][d];
    }
    if (ni == 0.0 || nj == 0.0) return pooled[i] == pooled[j] ? 1.0 : 0.0;
    return std::clamp(dot / std::sqrt(ni * nj), 0.0, 1.0);
  });
}

double ContingencyTable2x2::UnhelpfulRateHigh() const {
  const long col = helpful_high + unhelpful_high;
  if (col == 0) throw DomainError("contingency: empty high-perplexity column");
  return static_cast<double>(unhelpful_high) / static_cast<double>(col);
}

double ContingencyTable2x2::UnhelpfulRateLow() const {
  const long col = helpful_low + unhelpful_low;
  if (col == 0) throw DomainError("contingency: empty low-perplexity column");
  return static_cast<double>(unhelpful_low) / static_cast<double>(col);
}

ChiSquaredResult ChiSquared2x2(const ContingencyTable2x2& t) {
  const double o[2][2] = {
      {static_cast<double>(t.helpful_high), static_cast<double>(t.helpful_low)},
      {static_cast<double>(t.unhelpful_high), static_cast<double>(t.unhelpful_low)}};
  for (const auto& row : o) {
    for (double v : row) {
      if (v < 0.0) throw DomainError("chi-squared: negative count");
    }
  }
  const double rows[2] = {o[0][0] + o[0][1], o[1][0] + o[1][1]};
  const double cols[2] = {o[0][0] + o[1][0], o[0][1] + o[1][1]};
  const double total = rows[0] + rows[1];
  if (rows[0] == 0 || rows[1] == 0 || cols[0] == 0 || cols[1] == 0) {
    throw DomainError("chi-squared: a margin is zero");
  }
  ChiSquaredResult res;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      const double e = rows[r] * cols[c] / total;
      res.statistic += (o[r][c] - e) * (o[r][c] - e) / e;
    }
  }
  res.p_value = boost::math::gamma_q(0.5, res.statistic / 2.0);
  return res;
}

ContingencyTable2x2 BuildContingency(std::span<const double> perplexity,
                                     std::span<const int> unhelpful,
                                     double threshold) {
  if (perplexity.size() != unhelpful.size()) {
    throw ValidationError("contingency: length mismatch");
  }
  ContingencyTable2x2 t;
  for (std::size_t i = 0; i < perplexity.size(); ++i) {
    const bool high = perplexity[i] > threshold;
    if (unhelpful[i] == 1) {
      (high ? t.unhelpful_high : t.unhelpful_low)++;
    } else {
      (high ? t.helpful_high : t.helpful_low)++;
    }
  }
  return t;
}

}  // namespace fbloop::lang
