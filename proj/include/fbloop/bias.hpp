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

#include <string>
#include <vector>

namespace fbloop::bias {

// Two-period survey model. Satisfied users re-engage in the current period
// with probability p, unsatisfied ones with p - delta_p; n_joiners users who
// were inactive in the previous period join the current one.
struct BiasScenario {
  double s = 0.5;
  double p = 1.0;
  double delta_p = 0.0;
  long n_prev = 1;
  long n_joiners = 0;
};

// Throws DomainError naming the offending parameter.
void Validate(const BiasScenario& scenario);

// Exact survey error s_hat - s of the two-period model.
double ExactError(const BiasScenario& scenario);

// Equilibrium approximation of the survey error (assumes N' + pN ~ N).
double ApproxError(double s, double delta_p);

struct SweepRow {
  double s = 0.0;
  double delta_p = 0.0;
  double epsilon_hat = 0.0;
};

// Full cross product, s-major order.
std::vector<SweepRow> ErrorSweep(const std::vector<double>& s_values,
                                 const std::vector<double>& delta_p_grid);

// CSV with header `s,delta_p,epsilon_hat`.
std::string SweepCsv(const std::vector<SweepRow>& rows);

struct PanelUnit {
  bool satisfied = false;
  bool active_prev = false;
  bool active_cur = false;
};

struct PeriodPanel {
  std::vector<PanelUnit> units;
  BiasScenario scenario;
};

struct SurveyEstimate {
  double s_hat = 0.0;
  double error = 0.0;  // s_hat - s
  long n_active = 0;
  long n_satisfied_active = 0;
};

// Satisfied share among users active in the current period.
SurveyEstimate EstimateSurvey(const PeriodPanel& panel);

}  // namespace fbloop::bias
