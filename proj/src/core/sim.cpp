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
#include "fbloop/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "fbloop/error.hpp"
#include "fbloop/parallel.hpp"
#include "fbloop/rng.hpp"

namespace fbloop::sim {

namespace {

using domain::CovariateVector;
using domain::InteractionRecord;

struct NumericScale {
  const char* name;
  double center;
  double scale;
};

// Generator means / standard deviations; confounders enter standardized.
constexpr std::array<NumericScale, 6> kNumeric = {{
    {"token_count", 5.0, 2.0},
    {"wer", 0.2, 0.1789},
    {"nlu_confidence", 0.7, 0.1732},
    {"prior_active_days", 6.0, 2.449},
    {"day_of_week", 3.0, 2.0},
    {"hour_of_day", 11.5, 6.922},
}};

// Resolved confounder: either a standardized numeric or a level indicator.
struct Term {
  std::string field;
  std::string level;  // empty for numeric terms
  double center = 0.0;
  double scale = 1.0;
  double logit_effect = 0.0;
  double log_hazard_effect = 0.0;

  double Value(const CovariateVector& x) const {
    if (level.empty()) {
      return (domain::NumericCovariate(x, field) - center) / scale;
    }
    return domain::CategoricalCovariate(x, field) == level ? 1.0 : 0.0;
  }
};

std::vector<Term> ResolveTerms(const std::vector<Confounder>& confounders) {
  std::vector<Term> terms;
  for (const auto& c : confounders) {
    Term t;
    t.logit_effect = c.logit_effect;
    t.log_hazard_effect = c.log_hazard_effect;
    const auto eq = c.covariate.find('=');
    if (eq != std::string::npos) {
      t.field = c.covariate.substr(0, eq);
      t.level = c.covariate.substr(eq + 1);
      if (!domain::IsCategoricalCovariate(t.field)) {
        throw ValidationError("confounders: `" + t.field +
                              "` is not a categorical covariate");
      }
    } else {
      auto it = std::find_if(kNumeric.begin(), kNumeric.end(),
                             [&](const NumericScale& n) {
                               return c.covariate == n.name;
                             });
      if (it == kNumeric.end()) {
        throw ValidationError("confounders: unknown covariate `" +
                              c.covariate + "`");
      }
      t.field = it->name;
      t.center = it->center;
      t.scale = it->scale;
    }
    terms.push_back(std::move(t));
  }
  return terms;
}

// Words per task domain; the first few are the high-frequency core.
const std::vector<std::string>& DomainWords(const std::string& d) {
  static const std::vector<std::string> weather = {
      "what", "is", "the", "weather", "today", "rain", "temperature",
      "tomorrow", "wind", "tide"};
  static const std::vector<std::string> music = {
      "play", "some", "music", "song", "next", "by", "album", "volume",
      "shuffle", "playlist"};
  static const std::vector<std::string> phone = {
      "call", "mom", "dial", "my", "phone", "text", "message", "send",
      "contact", "number"};
  static const std::vector<std::string> timer = {
      "set", "a", "timer", "for", "minutes", "alarm", "stop", "cancel",
      "seconds", "hour"};
  static const std::vector<std::string> knowledge = {
      "who", "is", "how", "tall", "what", "does", "mean", "define",
      "population", "capital"};
  if (d == "weather") return weather;
  if (d == "music") return music;
  if (d == "phone") return phone;
  if (d == "timer") return timer;
  return knowledge;
}

std::vector<std::string> DrawTokens(Rng& rng, const std::string& d, int n) {
  const auto& words = DomainWords(d);
  std::vector<std::string> tokens;
  tokens.reserve(n);
  for (int i = 0; i < n; ++i) tokens.push_back(words[rng.Below(words.size())]);
  return tokens;
}

double Logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct UserDraw {
  UnitTruth truth;
  std::vector<InteractionRecord> records;
};

UserDraw DrawUser(const SimConfig& cfg, const std::vector<Term>& terms,
                  const domain::CovariateSchema& schema, std::size_t index) {
  Rng rng(DeriveSeed(DeriveSeed(cfg.seed, "event-log"), index));
  UserDraw out;
  char id[32];
  std::snprintf(id, sizeof(id), "u%07zu", index);

  CovariateVector x;
  const double t0 = rng.Uniform(0.0, cfg.enrollment_h);
  x.device_type = schema.device_type[rng.Below(schema.device_type.size())];
  x.os_version = schema.os_version[rng.Below(schema.os_version.size())];
  x.nlu_domain = schema.nlu_domain[rng.Below(schema.nlu_domain.size())];
  x.token_count = 1 + rng.Poisson(4.0);
  const double u = rng.Uniform();
  x.wer = 0.6 * u * u;
  x.nlu_confidence = 0.4 + 0.6 * rng.Uniform();
  x.prior_active_days = std::min(rng.Poisson(6.0), 14);
  x.day_of_week = static_cast<int>(domain::ActiveDay(t0) % 7);
  x.hour_of_day = static_cast<int>(std::fmod(t0, 24.0));

  double logit = std::log((1.0 - cfg.s) / cfg.s);
  double log_hazard = 0.0;
  for (const auto& t : terms) {
    const double v = t.Value(x);
    logit += t.logit_effect * v;
    log_hazard += t.log_hazard_effect * v;
  }
  auto& truth = out.truth;
  truth.user_id = id;
  truth.propensity = Logistic(logit);
  truth.z = rng.Bernoulli(truth.propensity) ? 1 : 0;
  truth.rate_multiplier = std::exp(log_hazard);
  truth.t0_h = t0;
  truth.censor_h = cfg.study_end_h() - t0;
  const double rate =
      (truth.z == 1 ? cfg.hazard_unhelpful : cfg.hazard_helpful) *
      truth.rate_multiplier;

  InteractionRecord annotated;
  annotated.user_id = id;
  annotated.timestamp_h = t0;
  annotated.tokens = DrawTokens(rng, x.nlu_domain, x.token_count);
  annotated.domain_label = x.nlu_domain;
  annotated.helpful = truth.z;
  annotated.annotated = true;
  annotated.covariates = x;
  out.records.push_back(annotated);

  // Engagements form a Poisson process; the first gap is T.
  double t = t0;
  bool first = true;
  const double end = cfg.study_end_h();
  for (;;) {
    const double gap = rng.Exponential(rate);
    if (first) truth.time_to_next_h = gap;
    t += gap;
    if (t >= end) break;
    if (!first && (!cfg.record_followups || t - t0 > cfg.followup_window_h)) {
      break;
    }
    InteractionRecord r;
    r.user_id = id;
    r.timestamp_h = t;
    r.tokens = DrawTokens(rng, x.nlu_domain, 1 + static_cast<int>(rng.Below(4)));
    r.domain_label = x.nlu_domain;
    r.helpful = domain::kHelpful;
    r.annotated = false;
    r.covariates = x;
    r.covariates.day_of_week = static_cast<int>(domain::ActiveDay(t) % 7);
    r.covariates.hour_of_day = static_cast<int>(std::fmod(t, 24.0));
    out.records.push_back(std::move(r));
    first = false;
  }
  return out;
}

std::string FieldPath(const char* f) { return std::string("`") + f + "`"; }

}  // namespace

std::vector<double> DefaultGrid() {
  std::vector<double> g;
  for (int h = 1; h <= 336; ++h) g.push_back(h);
  return g;
}

void Validate(const SimConfig& c) {
  if (c.n_users < 1) throw ValidationError(FieldPath("n_users") + " must be >= 1");
  if (!(c.horizon_h > 0.0)) throw ValidationError(FieldPath("horizon_h") + " must be > 0");
  if (!(c.enrollment_h > 0.0)) {
    throw ValidationError(FieldPath("enrollment_h") + " must be > 0");
  }
  if (!(c.s > 0.0 && c.s < 1.0)) throw ValidationError(FieldPath("s") + " must be in (0, 1)");
  if (!(c.hazard_helpful > 0.0)) {
    throw ValidationError(FieldPath("hazard_helpful") + " must be > 0");
  }
  if (!(c.hazard_unhelpful > 0.0)) {
    throw ValidationError(FieldPath("hazard_unhelpful") + " must be > 0");
  }
  if (!(c.followup_window_h >= 0.0)) {
    throw ValidationError(FieldPath("followup_window_h") + " must be >= 0");
  }
  for (double t : c.truth_grid) {
    if (!(t > 0.0)) throw ValidationError(FieldPath("truth_grid") + " entries must be > 0");
  }
  ResolveTerms(c.confounders);
}

SimConfig ConfigFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("sim config must be a JSON object");
  SimConfig c;
  auto get = [&](const char* key, auto& dst, bool required = false) {
    if (!j.contains(key)) {
      if (required) throw ValidationError("missing required field " + FieldPath(key));
      return;
    }
    try {
      j.at(key).get_to(dst);
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("field " + FieldPath(key) + " has wrong type");
    }
  };
  get("seed", c.seed, true);
  get("n_users", c.n_users);
  get("horizon_h", c.horizon_h);
  get("enrollment_h", c.enrollment_h);
  get("s", c.s);
  get("hazard_helpful", c.hazard_helpful);
  get("hazard_unhelpful", c.hazard_unhelpful);
  get("followup_window_h", c.followup_window_h);
  get("record_followups", c.record_followups);
  get("truth_grid", c.truth_grid);
  get("threads", c.threads);
  if (j.contains("confounders")) {
    const auto& arr = j.at("confounders");
    if (!arr.is_array()) throw ValidationError("field `confounders` must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& e = arr[i];
      const std::string path = "confounders[" + std::to_string(i) + "]";
      if (!e.is_object() || !e.contains("covariate")) {
        throw ValidationError("missing required field `" + path + ".covariate`");
      }
      Confounder cf;
      try {
        cf.covariate = e.at("covariate").get<std::string>();
        cf.logit_effect = e.value("logit_effect", 0.0);
        cf.log_hazard_effect = e.value("log_hazard_effect", 0.0);
      } catch (const nlohmann::json::exception&) {
        throw ValidationError("field `" + path + "` has wrong type");
      }
      c.confounders.push_back(cf);
    }
  }
  Validate(c);
  return c;
}

nlohmann::json ToJson(const SimConfig& c) {
  nlohmann::json conf = nlohmann::json::array();
  for (const auto& cf : c.confounders) {
    conf.push_back({{"covariate", cf.covariate},
                    {"logit_effect", cf.logit_effect},
                    {"log_hazard_effect", cf.log_hazard_effect}});
  }
  return {{"seed", c.seed},
          {"n_users", c.n_users},
          {"horizon_h", c.horizon_h},
          {"enrollment_h", c.enrollment_h},
          {"s", c.s},
          {"hazard_helpful", c.hazard_helpful},
          {"hazard_unhelpful", c.hazard_unhelpful},
          {"followup_window_h", c.followup_window_h},
          {"record_followups", c.record_followups},
          {"truth_grid", c.truth_grid},
          {"confounders", conf}};
}

nlohmann::json GroundTruth::ToJson(bool include_units) const {
  nlohmann::json j = {{"hazard_helpful", hazard_helpful},
                      {"hazard_unhelpful", hazard_unhelpful},
                      {"study_end_h", study_end_h},
                      {"grid", grid},
                      {"survival_helpful", survival_helpful},
                      {"survival_unhelpful", survival_unhelpful},
                      {"effect_ate", effect_ate},
                      {"effect_overlap", effect_overlap}};
  if (include_units) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& u : units) {
      arr.push_back({{"user_id", u.user_id},
                     {"z", u.z},
                     {"propensity", u.propensity},
                     {"rate_multiplier", u.rate_multiplier},
                     {"t0_h", u.t0_h},
                     {"time_to_next_h", u.time_to_next_h},
                     {"censor_h", u.censor_h}});
    }
    j["units"] = std::move(arr);
  }
  return j;
}

SimResult SimulateEventLog(const SimConfig& config) {
  Validate(config);
  const auto terms = ResolveTerms(config.confounders);
  const auto schema = domain::CovariateSchema::Default();
  const std::size_t n = static_cast<std::size_t>(config.n_users);

  std::vector<UserDraw> draws(n);
  ParallelFor(n, config.threads, [&](std::size_t i) {
    draws[i] = DrawUser(config, terms, schema, i);
  });

  SimResult result;
  auto& truth = result.truth;
  truth.hazard_helpful = config.hazard_helpful;
  truth.hazard_unhelpful = config.hazard_unhelpful;
  truth.study_end_h = config.study_end_h();
  truth.grid = config.truth_grid.empty() ? DefaultGrid() : config.truth_grid;
  truth.units.reserve(n);
  std::size_t total = 0;
  for (const auto& d : draws) total += d.records.size();
  result.log.reserve(total);
  // User ids are zero-padded in index order, so the log is already sorted.
  for (auto& d : draws) {
    truth.units.push_back(d.truth);
    for (auto& r : d.records) result.log.push_back(std::move(r));
  }

  const std::size_t g = truth.grid.size();
  truth.survival_helpful.assign(g, 0.0);
  truth.survival_unhelpful.assign(g, 0.0);
  truth.effect_ate.assign(g, 0.0);
  truth.effect_overlap.assign(g, 0.0);
  for (std::size_t k = 0; k < g; ++k) {
    const double t = truth.grid[k];
    double sh = 0.0, su = 0.0, ow = 0.0, ow_norm = 0.0;
    for (const auto& u : truth.units) {
      const double s_h = std::exp(-config.hazard_helpful * u.rate_multiplier * t);
      const double s_u = std::exp(-config.hazard_unhelpful * u.rate_multiplier * t);
      sh += s_h;
      su += s_u;
      const double h = u.propensity * (1.0 - u.propensity);
      ow += h * (s_h - s_u);
      ow_norm += h;
    }
    truth.survival_helpful[k] = sh / n;
    truth.survival_unhelpful[k] = su / n;
    truth.effect_ate[k] = (sh - su) / n;
    truth.effect_overlap[k] = ow / ow_norm;
  }
  return result;
}

bias::PeriodPanel SimulateSurveyPanel(const bias::BiasScenario& scenario,
                                      std::uint64_t seed) {
  bias::Validate(scenario);
  Rng rng(DeriveSeed(seed, "survey-panel"));
  bias::PeriodPanel panel;
  panel.scenario = scenario;
  panel.units.reserve(scenario.n_prev + scenario.n_joiners);
  for (long i = 0; i < scenario.n_prev; ++i) {
    bias::PanelUnit u;
    u.satisfied = rng.Bernoulli(scenario.s);
    u.active_prev = true;
    const double p = u.satisfied ? scenario.p : scenario.p - scenario.delta_p;
    u.active_cur = rng.Bernoulli(p);
    panel.units.push_back(u);
  }
  // Joiners are split deterministically: round(s N') satisfied.
  const long satisfied_joiners =
      std::lround(scenario.s * static_cast<double>(scenario.n_joiners));
  for (long i = 0; i < scenario.n_joiners; ++i) {
    panel.units.push_back({i < satisfied_joiners, false, true});
  }
  return panel;
}

}  // namespace fbloop::sim
