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
#include "fbloop/fbloop.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbloop/bias.hpp"
#include "fbloop/domain.hpp"
#include "fbloop/error.hpp"
#include "fbloop/format.hpp"
#include "fbloop/lang.hpp"
#include "fbloop/matching.hpp"
#include "fbloop/propensity.hpp"
#include "fbloop/sim.hpp"
#include "fbloop/survival.hpp"

struct fbloop_log {
  std::vector<fbloop::domain::InteractionRecord> records;
  fbloop::domain::CovariateSchema schema;
};

struct fbloop_lm {
  fbloop::lang::TrigramLm model;
};

namespace {

using nlohmann::json;
using namespace fbloop;

constexpr const char* kVersion = "0.1.0";

thread_local std::string g_last_error;

fbloop_status ToStatus(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return FBLOOP_ERR_VALIDATION;
    case ErrorKind::kDomain: return FBLOOP_ERR_DOMAIN;
    case ErrorKind::kComputation: return FBLOOP_ERR_COMPUTATION;
    case ErrorKind::kIo: return FBLOOP_ERR_IO;
  }
  return FBLOOP_ERR_INTERNAL;
}

template <typename Fn>
fbloop_status Guard(const char* context, Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FBLOOP_OK;
  } catch (const Error& e) {
    g_last_error = std::string(context) + ": " + e.what();
    return ToStatus(e.kind());
  } catch (const json::exception& e) {
    g_last_error = std::string(context) + ": invalid JSON: " + e.what();
    return FBLOOP_ERR_VALIDATION;
  } catch (const std::bad_alloc&) {
    g_last_error = std::string(context) + ": out of memory";
    return FBLOOP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string(context) + ": " + e.what();
    return FBLOOP_ERR_INTERNAL;
  }
}

void Require(const void* p, const char* name) {
  if (p == nullptr) throw ValidationError(std::string("`") + name + "` is null");
}

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

// Typed accessor over an options object; type errors name the field.
class Options {
 public:
  explicit Options(const char* text) {
    if (text != nullptr && *text != '\0') {
      try {
        j_ = json::parse(text);
      } catch (const json::parse_error& e) {
        throw ValidationError(std::string("options: ") + e.what());
      }
    }
    if (j_.is_null()) j_ = json::object();
    if (!j_.is_object()) throw ValidationError("options: expected an object");
  }

  bool Has(const char* key) const { return j_.contains(key); }
  const json& Raw(const char* key) const { return j_.at(key); }

  template <typename T>
  T Get(const char* key, T fallback) const {
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(std::string("options: field `") + key +
                            "` has the wrong type");
    }
  }

 private:
  json j_;
};

struct Resampling {
  int n_boot;
  double level;
  std::uint64_t seed;
  unsigned threads;
};

Resampling ReadResampling(const Options& o, int default_boot) {
  Resampling r{o.Get<int>("n_boot", default_boot), o.Get<double>("level", 0.95),
               o.Get<std::uint64_t>("seed", 0), o.Get<unsigned>("threads", 0)};
  if (r.n_boot < 0) throw ValidationError("options: `n_boot` must be >= 0");
  if (!(r.level > 0.0 && r.level < 1.0)) {
    throw ValidationError("options: `level` must be in (0, 1)");
  }
  return r;
}

std::vector<domain::AnnotatedUnit> Units(const fbloop_log& log,
                                         const Options& o) {
  const double end = o.Get<double>("study_end_h", domain::LastTimestamp(log.records));
  return domain::ExtractUnits(log.records, end);
}

json ToJson(const propensity::PropensitySummary& s) {
  return {{"min", s.min},       {"q25", s.q25}, {"median", s.median},
          {"q75", s.q75},       {"max", s.max}, {"n_clamped", s.n_clamped}};
}

json ToJson(const std::vector<propensity::BalanceRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"covariate", r.covariate},
                   {"smd_raw", r.smd_raw},
                   {"smd_weighted", r.smd_weighted},
                   {"flagged", r.flagged}});
  }
  return out;
}

std::vector<propensity::WeightScheme> Schemes(const std::string& name) {
  using propensity::WeightScheme;
  if (name == "all") {
    return {WeightScheme::kIpw, WeightScheme::kOverlap, WeightScheme::kEntropy};
  }
  return {propensity::ParseWeightScheme(name)};
}

std::vector<int> KDays(const Options& o) {
  std::vector<int> ks;
  if (!o.Has("k_days")) {
    ks = {3};
  } else if (o.Raw("k_days").is_array()) {
    ks = o.Get<std::vector<int>>("k_days", {});
  } else {
    ks = {o.Get<int>("k_days", 3)};
  }
  if (ks.empty()) throw ValidationError("options: `k_days` is empty");
  for (int k : ks) {
    if (k < 1) throw ValidationError("options: `k_days` entries must be >= 1");
  }
  return ks;
}

}  // namespace

extern "C" {

const char* fbloop_version(void) { return kVersion; }

const char* fbloop_last_error(void) { return g_last_error.c_str(); }

void fbloop_free(void* p) { std::free(p); }

fbloop_status fbloop_log_read(const char* path, const char* schema_json,
                              fbloop_log** out) {
  return Guard("log", [&] {
    Require(path, "path");
    Require(out, "out");
    auto schema = schema_json ? domain::CovariateSchema::FromJson(json::parse(schema_json))
                              : domain::CovariateSchema::Default();
    auto result = domain::ValidateLog(domain::ReadJsonLines(path), schema);
    if (!result.ok()) {
      std::string msg = std::string(path) + ": " +
                        std::to_string(result.errors.size()) + " invalid field(s)";
      const std::size_t shown = std::min<std::size_t>(result.errors.size(), 5);
      for (std::size_t i = 0; i < shown; ++i) {
        const auto& e = result.errors[i];
        msg += "; record " + std::to_string(e.index) + " `" + e.field + "`: " + e.message;
      }
      throw ValidationError(msg);
    }
    *out = new fbloop_log{std::move(result.records), std::move(schema)};
  });
}

fbloop_status fbloop_log_simulate(const char* config_json, fbloop_log** out,
                                  char** truth_json) {
  return Guard("simulate", [&] {
    Require(config_json, "config_json");
    Require(out, "out");
    json j;
    try {
      j = json::parse(config_json);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
    auto result = sim::SimulateEventLog(sim::ConfigFromJson(j));
    std::string truth;
    if (truth_json) truth = result.truth.ToJson(true).dump(2);
    auto log = std::make_unique<fbloop_log>(
        fbloop_log{std::move(result.log), domain::CovariateSchema::Default()});
    if (truth_json) *truth_json = Dup(truth);
    *out = log.release();
  });
}

fbloop_status fbloop_log_to_jsonl(const fbloop_log* log, char** out) {
  return Guard("log", [&] {
    Require(log, "log");
    Require(out, "out");
    *out = Dup(domain::ToJsonLines(log->records));
  });
}

size_t fbloop_log_size(const fbloop_log* log) {
  return log ? log->records.size() : 0;
}

double fbloop_log_last_timestamp(const fbloop_log* log) {
  return log ? domain::LastTimestamp(log->records) : 0.0;
}

void fbloop_log_free(fbloop_log* log) { delete log; }

fbloop_status fbloop_estimate_rpce(const fbloop_log* log,
                                   const char* options_json, char** csv,
                                   char** diagnostics) {
  return Guard("estimate rpce", [&] {
    Require(log, "log");
    Require(csv, "csv");
    Options o(options_json);
    const auto r = ReadResampling(o, 200);
    survival::RpceOptions opt;
    opt.scheme = propensity::ParseWeightScheme(o.Get<std::string>("scheme", "overlap"));
    opt.n_boot = r.n_boot;
    opt.level = r.level;
    opt.seed = r.seed;
    opt.threads = r.threads;
    const auto grid = o.Get<std::vector<double>>("grid", sim::DefaultGrid());
    const auto obs = survival::FromUnits(Units(*log, o));
    const auto curve = survival::RpcePipeline(obs, grid, log->schema, opt);
    long treated = 0;
    for (const auto& u : obs) treated += u.z;
    json d = {{"method", "rpce"},
              {"scheme", propensity::ToString(curve.scheme)},
              {"n_units", obs.size()},
              {"n_treated", treated},
              {"n_control", static_cast<long>(obs.size()) - treated},
              {"n_boot", opt.n_boot},
              {"level", opt.level},
              {"warnings", curve.warnings},
              {"propensity", ToJson(curve.propensity)},
              {"balance", ToJson(curve.balance)}};
    std::string table = curve.ToCsv();
    if (diagnostics) *diagnostics = Dup(d.dump(2));
    *csv = Dup(table);
  });
}

fbloop_status fbloop_estimate_active_days(const fbloop_log* log,
                                          const char* options_json, char** csv,
                                          char** diagnostics) {
  return Guard("estimate active-days", [&] {
    Require(log, "log");
    Require(csv, "csv");
    Options o(options_json);
    const auto r = ReadResampling(o, 1000);
    propensity::AteOptions opt;
    opt.n_boot = r.n_boot;
    opt.level = r.level;
    opt.seed = r.seed;
    opt.threads = r.threads;
    const auto units = Units(*log, o);
    std::string table = "k_days,scheme,estimate,ci_low,ci_high,boot_se,n_treated,n_control\n";
    json results = json::array();
    for (int k : KDays(o)) {
      for (auto scheme : Schemes(o.Get<std::string>("scheme", "overlap"))) {
        const auto res = propensity::ActiveDaysAte(units, k, scheme, log->schema, opt);
        const auto& a = res.ate;
        table += std::to_string(k) + "," + std::string(propensity::ToString(scheme)) +
                 "," + FormatDouble(a.estimate) + "," + FormatDouble(a.ci_low) + "," +
                 FormatDouble(a.ci_high) + "," + FormatDouble(a.boot_se) + "," +
                 std::to_string(a.n_treated) + "," + std::to_string(a.n_control) + "\n";
        results.push_back({{"k_days", k},
                           {"scheme", propensity::ToString(scheme)},
                           {"n_excluded", res.n_excluded},
                           {"propensity", ToJson(res.propensity)},
                           {"balance", ToJson(res.balance)}});
      }
    }
    json d = {{"method", "active-days"}, {"n_units", units.size()},
              {"n_boot", opt.n_boot}, {"level", opt.level}, {"results", results}};
    if (diagnostics) *diagnostics = Dup(d.dump(2));
    *csv = Dup(table);
  });
}

fbloop_status fbloop_estimate_cem(const fbloop_log* log,
                                  const char* options_json, char** csv,
                                  char** diagnostics) {
  return Guard("estimate cem", [&] {
    Require(log, "log");
    Require(csv, "csv");
    Options o(options_json);
    const auto r = ReadResampling(o, 1000);
    matching::CemOptions opt{r.n_boot, r.level, r.seed, r.threads};
    const auto covariates =
        o.Get<std::vector<std::string>>("covariates", matching::DefaultCemCovariates());
    const auto all_units = Units(*log, o);
    std::string table = "k_days,estimate,ci_low,ci_high,boot_se\n";
    json results = json::array();
    for (int k : KDays(o)) {
      const auto units = propensity::UnitsWithFollowup(all_units, k);
      std::vector<domain::CovariateVector> xs;
      std::vector<int> z;
      std::vector<double> y;
      for (const auto& u : units) {
        xs.push_back(u.x);
        z.push_back(u.z);
        y.push_back(propensity::ActiveDaysOutcome(u, k));
      }
      const auto spec = matching::DefaultCoarsening(xs, covariates);
      std::vector<matching::StratumKey> keys;
      std::set<std::string> warnings;
      for (const auto& x : xs) {
        auto c = matching::Coarsen(x, spec);
        keys.push_back(std::move(c.key));
        warnings.insert(c.warnings.begin(), c.warnings.end());
      }
      const auto ate = matching::EstimateCemAte(y, z, keys, opt);
      table += std::to_string(k) + "," + FormatDouble(ate.estimate) + "," +
               FormatDouble(ate.ci_low) + "," + FormatDouble(ate.ci_high) + "," +
               FormatDouble(ate.boot_se) + "\n";
      results.push_back({{"k_days", k},
                         {"n_units", units.size()},
                         {"n_excluded", all_units.size() - units.size()},
                         {"coarsening", spec.ToJson()},
                         {"match", ate.match.Summary()},
                         {"warnings", warnings}});
    }
    json d = {{"method", "cem"}, {"n_boot", opt.n_boot}, {"level", opt.level},
              {"covariates", covariates}, {"results", results}};
    if (diagnostics) *diagnostics = Dup(d.dump(2));
    *csv = Dup(table);
  });
}

fbloop_status fbloop_bias_exact(double s, double p, double delta_p, long n_prev,
                                long n_joiners, double* out) {
  return Guard("bias", [&] {
    Require(out, "out");
    *out = bias::ExactError({s, p, delta_p, n_prev, n_joiners});
  });
}

fbloop_status fbloop_bias_approx(double s, double delta_p, double* out) {
  return Guard("bias", [&] {
    Require(out, "out");
    *out = bias::ApproxError(s, delta_p);
  });
}

fbloop_status fbloop_bias_sweep(const double* s_values, size_t n_s,
                                const double* delta_p_values, size_t n_delta_p,
                                char** csv) {
  return Guard("bias sweep", [&] {
    Require(s_values, "s_values");
    Require(delta_p_values, "delta_p_values");
    Require(csv, "csv");
    const auto rows = bias::ErrorSweep(
        std::vector<double>(s_values, s_values + n_s),
        std::vector<double>(delta_p_values, delta_p_values + n_delta_p));
    *csv = Dup(bias::SweepCsv(rows));
  });
}

fbloop_status fbloop_bias_panel(double s, double p, double delta_p, long n_prev,
                                long n_joiners, uint64_t seed, double* s_hat) {
  return Guard("bias panel", [&] {
    Require(s_hat, "s_hat");
    const auto panel = sim::SimulateSurveyPanel({s, p, delta_p, n_prev, n_joiners}, seed);
    *s_hat = bias::EstimateSurvey(panel).s_hat;
  });
}

fbloop_status fbloop_lm_train(const char* corpus_path, double k, double alpha,
                              fbloop_lm** out) {
  return Guard("lm train", [&] {
    Require(corpus_path, "corpus_path");
    Require(out, "out");
    *out = new fbloop_lm{lang::TrigramLm::Train(lang::ReadCorpus(corpus_path), k, alpha)};
  });
}

fbloop_status fbloop_lm_load(const char* path, fbloop_lm** out) {
  return Guard("lm load", [&] {
    Require(path, "path");
    Require(out, "out");
    std::ifstream in(path);
    if (!in) throw IoError(std::string("cannot open ") + path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string(path) + ": " + e.what());
    }
    *out = new fbloop_lm{lang::TrigramLm::FromJson(j)};
  });
}

fbloop_status fbloop_lm_to_json(const fbloop_lm* lm, char** out) {
  return Guard("lm", [&] {
    Require(lm, "lm");
    Require(out, "out");
    *out = Dup(lm->model.ToJson().dump());
  });
}

fbloop_status fbloop_lm_perplexity(const fbloop_lm* lm, const char* sentence,
                                   double* out) {
  return Guard("lm perplexity", [&] {
    Require(lm, "lm");
    Require(sentence, "sentence");
    Require(out, "out");
    *out = lm->model.Perplexity(lang::Tokenize(sentence));
  });
}

void fbloop_lm_free(fbloop_lm* lm) { delete lm; }

fbloop_status fbloop_lang_trend(const fbloop_log* log, const fbloop_lm* lm,
                                const char* options_json, char** csv,
                                char** summary_json) {
  return Guard("lang trend", [&] {
    Require(log, "log");
    Require(lm, "lm");
    Require(csv, "csv");
    Options o(options_json);
    domain::StudyWindow window;
    window.start_h = o.Get<double>("start_h", window.start_h);
    window.end_h = o.Get<double>("end_h", window.end_h);
    window.new_user_quiet_period_days =
        o.Get<int>("quiet_period_days", window.new_user_quiet_period_days);
    const double origin = o.Get<double>(
        "origin_h", window.start_h + 24.0 * window.new_user_quiet_period_days);
    const double width = o.Get<double>("window_days", 7.0);
    const auto cohorts = domain::AssignCohorts(log->records, window);
    const auto trend =
        lang::CohortPpTrend(log->records, cohorts, lm->model, width, origin, window.end_h);
    json summary = {{"window_days", width},
                    {"origin_h", origin},
                    {"end_h", window.end_h},
                    {"counts", trend.counts},
                    {"retained_mean_pp", trend.retained_mean ? json(*trend.retained_mean) : json()},
                    {"dropout_mean_pp", trend.dropout_mean ? json(*trend.dropout_mean) : json()}};
    if (summary_json) *summary_json = Dup(summary.dump(2));
    *csv = Dup(trend.ToCsv());
  });
}

fbloop_status fbloop_lang_diversity(const char* sentences_path,
                                    const char* metric,
                                    const char* embeddings_path, double* out) {
  return Guard("lang diversity", [&] {
    Require(sentences_path, "sentences_path");
    Require(metric, "metric");
    Require(out, "out");
    const auto sentences = lang::ReadCorpus(sentences_path);
    const std::string m = metric;
    if (m == "selfbleu") {
      *out = lang::SelfBleuDiversity(sentences);
    } else if (m == "jaccard") {
      *out = lang::JaccardDiversity(sentences);
    } else if (m == "wed") {
      Require(embeddings_path, "embeddings_path");
      *out = lang::WedDiversity(sentences, lang::EmbeddingTable::Read(embeddings_path));
    } else {
      throw ValidationError("unknown metric `" + m + "`");
    }
  });
}

fbloop_status fbloop_lang_chisq(long helpful_high, long helpful_low,
                                long unhelpful_high, long unhelpful_low,
                                double* statistic, double* p_value,
                                double* rate_high, double* rate_low) {
  return Guard("lang chisq", [&] {
    const lang::ContingencyTable2x2 t{helpful_high, helpful_low, unhelpful_high,
                                      unhelpful_low};
    const auto res = lang::ChiSquared2x2(t);
    if (statistic) *statistic = res.statistic;
    if (p_value) *p_value = res.p_value;
    if (rate_high) *rate_high = t.UnhelpfulRateHigh();
    if (rate_low) *rate_low = t.UnhelpfulRateLow();
  });
}

fbloop_status fbloop_lang_read_table(const char* path, long counts[4]) {
  return Guard("lang table", [&] {
    Require(path, "path");
    Require(counts, "counts");
    std::ifstream in(path);
    if (!in) throw IoError(std::string("cannot open ") + path);
    std::optional<std::pair<long, long>> helpful, unhelpful;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      for (char& c : line) {
        if (c == ',' || c == '\t') c = ' ';
      }
      std::istringstream ls(line);
      std::string label;
      if (!(ls >> label) || label[0] == '#') continue;
      if (label != "helpful" && label != "unhelpful") continue;  // header
      long high = 0, low = 0;
      std::string rest;
      if (!(ls >> high >> low) || (ls >> rest)) {
        throw ValidationError(std::string(path) + ":" + std::to_string(lineno) +
                              ": expected `<label> <high> <low>`");
      }
      if (high < 0 || low < 0) {
        throw ValidationError(std::string(path) + ":" + std::to_string(lineno) +
                              ": counts must be >= 0");
      }
      (label == "helpful" ? helpful : unhelpful) = std::make_pair(high, low);
    }
    if (!helpful || !unhelpful) {
      throw ValidationError(std::string(path) + ": needs `helpful` and `unhelpful` rows");
    }
    counts[0] = helpful->first;
    counts[1] = helpful->second;
    counts[2] = unhelpful->first;
    counts[3] = unhelpful->second;
  });
}

}  // extern "C"
