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

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbloop/bias.hpp"
#include "fbloop/domain.hpp"

namespace fbloop::sim {

// Effect of one covariate on the treatment logit and on the log-hazard.
// `covariate` is a numeric field name (token_count, wer, nlu_confidence,
// prior_active_days, day_of_week, hour_of_day), which enters standardized,
// or `field=level` for a categorical indicator.
struct Confounder {
  std::string covariate;
  double logit_effect = 0.0;
  double log_hazard_effect = 0.0;
};

struct SimConfig {
  long n_users = 1000;
  double horizon_h = 336.0;     // minimum follow-up after the annotation
  double enrollment_h = 336.0;  // annotation times ~ U[0, enrollment_h)
  double s = 0.8;               // P(helpful)
  double hazard_helpful = 0.03;
  double hazard_unhelpful = 0.02734;
  std::vector<Confounder> confounders;
  std::uint64_t seed = 0;
  // Follow-up engagements beyond the first one are only written to the log
  // within this many hours of the annotation. The first engagement is always
  // written when it falls before the study end.
  double followup_window_h = 336.0;
  bool record_followups = true;
  std::vector<double> truth_grid;  // empty = hourly 1..336
  unsigned threads = 0;

  double study_end_h() const { return enrollment_h + horizon_h; }
};

void Validate(const SimConfig& config);

// Parses a config document. `seed` is required; errors name the field path.
SimConfig ConfigFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const SimConfig& config);

// Per-user generative truth.
struct UnitTruth {
  std::string user_id;
  int z = 0;
  double propensity = 0.0;       // true P(Z=1 | x)
  double rate_multiplier = 1.0;  // exp(sum of log-hazard effects)
  double t0_h = 0.0;
  double time_to_next_h = 0.0;  // T (may exceed the censoring time)
  double censor_h = 0.0;        // C = study end - t0
};

struct GroundTruth {
  double hazard_helpful = 0.0;
  double hazard_unhelpful = 0.0;
  double study_end_h = 0.0;
  std::vector<double> grid;
  // Sample-average potential survival S(t; z) = mean_i exp(-lambda_z(x_i) t).
  std::vector<double> survival_helpful;
  std::vector<double> survival_unhelpful;
  // P(t; unhelpful) - P(t; helpful), averaged over the sample.
  std::vector<double> effect_ate;
  // Same contrast tilted by the true e(x)(1 - e(x)).
  std::vector<double> effect_overlap;
  std::vector<UnitTruth> units;

  nlohmann::json ToJson(bool include_units = false) const;
};

struct SimResult {
  std::vector<domain::InteractionRecord> log;  // validated and sorted
  GroundTruth truth;
};

SimResult SimulateEventLog(const SimConfig& config);

// Closed-form contrast for the unconfounded exponential model.
inline double ExponentialEffect(double hazard_unhelpful, double hazard_helpful,
                                double t) {
  return std::exp(-hazard_helpful * t) - std::exp(-hazard_unhelpful * t);
}

bias::PeriodPanel SimulateSurveyPanel(const bias::BiasScenario& scenario,
                                      std::uint64_t seed);

std::vector<double> DefaultGrid();

}  // namespace fbloop::sim
