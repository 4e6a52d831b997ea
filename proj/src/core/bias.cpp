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
#include "fbloop/bias.hpp"

#include <cmath>
#include <sstream>

#include "fbloop/error.hpp"
#include "fbloop/format.hpp"

namespace fbloop::bias {

void Validate(const BiasScenario& sc) {
  if (!(sc.s > 0.0 && sc.s < 1.0)) throw DomainError("s must be in (0, 1)");
  if (!(sc.p > 0.0 && sc.p <= 1.0)) throw DomainError("p must be in (0, 1]");
  if (!(sc.delta_p >= 0.0)) throw DomainError("delta_p must be >= 0");
  if (sc.p - sc.delta_p < 0.0) {
    throw DomainError("p - delta_p must be >= 0");
  }
  if (sc.n_prev < 1) throw DomainError("n_prev must be >= 1");
  if (sc.n_joiners < 0) throw DomainError("n_joiners must be >= 0");
}

double ExactError(const BiasScenario& sc) {
  Validate(sc);
  const double s = sc.s;
  const double dp = sc.delta_p;
  const double ratio =
      static_cast<double>(sc.n_joiners) / static_cast<double>(sc.n_prev);
  const double denom = sc.p - dp + s * dp + ratio;
  if (denom == 0.0) throw DomainError("exact error: zero denominator");
  return s * dp * (1.0 - s) / denom;
}

double ApproxError(double s, double delta_p) {
  if (!(s > 0.0 && s < 1.0)) throw DomainError("s must be in (0, 1)");
  if (!(delta_p >= 0.0)) throw DomainError("delta_p must be >= 0");
  const double denom = 1.0 - delta_p * (1.0 - s);
  if (!(denom > 0.0)) {
    throw DomainError("approx error: delta_p * (1 - s) must be < 1");
  }
  return s * delta_p * (1.0 - s) / denom;
}

std::vector<SweepRow> ErrorSweep(const std::vector<double>& s_values,
                                 const std::vector<double>& delta_p_grid) {
  std::vector<SweepRow> rows;
  rows.reserve(s_values.size() * delta_p_grid.size());
  for (double s : s_values) {
    for (double dp : delta_p_grid) {
      rows.push_back({s, dp, ApproxError(s, dp)});
    }
  }
  return rows;
}

std::string SweepCsv(const std::vector<SweepRow>& rows) {
  std::string out = "s,delta_p,epsilon_hat\n";
  for (const auto& r : rows) {
    out += FormatDouble(r.s) + "," + FormatDouble(r.delta_p) + "," +
           FormatDouble(r.epsilon_hat) + "\n";
  }
  return out;
}

SurveyEstimate EstimateSurvey(const PeriodPanel& panel) {
  SurveyEstimate est;
  for (const auto& u : panel.units) {
    if (!u.active_cur) continue;
    ++est.n_active;
    if (u.satisfied) ++est.n_satisfied_active;
  }
  if (est.n_active == 0) {
    throw ComputationError("survey estimate: no active users in the period");
  }
  est.s_hat = static_cast<double>(est.n_satisfied_active) /
              static_cast<double>(est.n_active);
  est.error = est.s_hat - panel.scenario.s;
  return est;
}

}  // namespace fbloop::bias
