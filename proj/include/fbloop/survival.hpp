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
#include <span>
#include <string>
#include <vector>

#include "fbloop/domain.hpp"
#include "fbloop/propensity.hpp"

namespace fbloop::survival {

struct SurvivalObservation {
  double t_obs = 0.0;  // min(T, C) > 0
  int event = 0;       // 1 = next engagement observed
  int z = 0;
  domain::CovariateVector x;
};

std::vector<SurvivalObservation> FromUnits(
    const std::vector<domain::AnnotatedUnit>& units);

// Product-limit estimate of S(t) = P(T >= t). The factor for an event at u
// applies for t > u; at tied times events precede censorings.
class KaplanMeier {
 public:
  KaplanMeier() = default;
  // (time, event) pairs; times must be > 0.
  KaplanMeier(std::span<const double> times, std::span<const int> events);
  explicit KaplanMeier(std::span<const SurvivalObservation> obs);

  // Throws DomainError for t <= 0.
  double Survival(double t) const;
  // Greenwood variance of Survival(t).
  double GreenwoodVariance(double t) const;

  std::size_t size() const { return n_; }
  double last_time() const { return last_time_; }
  // Earliest censoring time (infinity when nothing is censored).
  double first_censor_time() const { return first_censor_; }

  // Distinct event times with risk-set sizes and event counts.
  const std::vector<double>& event_times() const { return times_; }
  const std::vector<long>& at_risk() const { return at_risk_; }
  const std::vector<long>& events() const { return events_; }

 private:
  void Build(std::vector<std::pair<double, int>> data);
  std::size_t EventsBefore(double t) const;

  std::size_t n_ = 0;
  double last_time_ = 0.0;
  double first_censor_ = 0.0;
  std::vector<double> times_;
  std::vector<long> at_risk_;
  std::vector<long> events_;
  // Censoring-free runs of event times telescope, so S is evaluated as
  // segment_prefix * (n_j - d_j) / segment_start_n.
  std::vector<double> segment_prefix_;
  std::vector<long> segment_start_n_;
  std::vector<double> greenwood_sum_;
};

double KaplanMeierSurvival(std::span<const SurvivalObservation> obs, double t);

struct PseudoObservationMatrix {
  std::vector<double> grid;
  std::vector<std::vector<double>> values;  // [unit][grid index]
};

// Jackknife pseudo-observations theta_i(t) = N S(t) - (N - 1) S_{-i}(t),
// with every leave-one-out estimate derived from shared risk-set tables.
class PseudoObservations {
 public:
  PseudoObservations(std::span<const double> times, std::span<const int> events);

  // Column for grid time t, written into out (size N).
  void Column(double t, std::span<double> out) const;
  std::size_t size() const { return times_.size(); }

 private:
  std::vector<double> times_;
  std::vector<int> events_;
  KaplanMeier km_;
  std::vector<std::size_t> first_at_or_after_;  // per unit
  std::vector<double> pa_, pb_;  // prefix products of nonzero factors
  std::vector<std::size_t> za_, zb_;  // prefix zero counts
};

PseudoObservationMatrix ComputePseudoObservations(
    std::span<const SurvivalObservation> obs, const std::vector<double>& grid);

struct RpceOptions {
  propensity::WeightScheme scheme = propensity::WeightScheme::kOverlap;
  int n_boot = 200;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  propensity::LogisticOptions logistic;
};

struct RpceCurve {
  std::vector<double> grid;
  // Weighted P(t; unhelpful) - P(t; helpful).
  std::vector<double> estimate;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::vector<double> boot_se;
  std::vector<double> prob_unhelpful;
  std::vector<double> prob_helpful;
  propensity::WeightScheme scheme = propensity::WeightScheme::kOverlap;
  std::vector<std::string> warnings;
  propensity::PropensitySummary propensity;
  std::vector<propensity::BalanceRow> balance;

  // CSV with header `t,estimate,ci_low,ci_high`.
  std::string ToCsv() const;
};

// Pseudo-observations on the grid, propensity fit, balancing weights, and
// the weighted contrast per grid time; percentile bootstrap over units.
RpceCurve RpcePipeline(std::span<const SurvivalObservation> obs,
                       const std::vector<double>& grid,
                       const domain::CovariateSchema& schema,
                       const RpceOptions& options);

struct NaiveDifference {
  std::vector<double> estimate;  // (1 - S_1) - (1 - S_0), unweighted KM
  std::vector<double> se;        // Greenwood
};

NaiveDifference NaiveKmDifference(std::span<const SurvivalObservation> obs,
                                  const std::vector<double>& grid);

}  // namespace fbloop::survival
