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
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "fbloop/domain.hpp"

namespace fbloop::propensity {

inline constexpr double kPropensityFloor = 1e-6;

struct LogisticOptions {
  double ridge = 1e-6;
  double tol = 1e-8;
  int max_iter = 100;
};

struct LogisticFit {
  Eigen::VectorXd coefficients;
  int iterations = 0;
  double max_abs_score = 0.0;
  // Penalized log-likelihood after each accepted step (index 0 = start).
  std::vector<double> loglik_trace;
};

// Ridge-penalized Bernoulli log-likelihood,
//   sum_i [z_i eta_i - log(1 + exp(eta_i))] - ridge/2 * |beta|^2.
// Every coefficient, the intercept included, is penalized.
double PenalizedLogLikelihood(const Eigen::MatrixXd& X,
                              std::span<const int> z,
                              const Eigen::VectorXd& beta, double ridge);

// Gradient of PenalizedLogLikelihood.
Eigen::VectorXd Score(const Eigen::MatrixXd& X, std::span<const int> z,
                      const Eigen::VectorXd& beta, double ridge);

// Newton / IRLS with step halving. Converged when max |score| < tol.
// Throws ComputationError on separation (ridge == 0) or non-convergence.
LogisticFit FitLogistic(const Eigen::MatrixXd& X, std::span<const int> z,
                        const LogisticOptions& options = {});

// One design column.
struct FeatureColumn {
  enum class Kind { kIntercept, kNumeric, kIndicator };
  Kind kind = Kind::kIntercept;
  std::string field;
  std::string level;  // indicator columns only
  double center = 0.0;
  double scale = 1.0;

  std::string Name() const;
};

// Covariate encoding: intercept, standardized numerics, and one-hot
// categoricals with the first observed level (in schema order) dropped as
// reference. Constant columns are left out.
class FeatureEncoder {
 public:
  FeatureEncoder() = default;
  FeatureEncoder(std::span<const domain::CovariateVector> xs,
                 const domain::CovariateSchema& schema);

  Eigen::MatrixXd Encode(std::span<const domain::CovariateVector> xs) const;
  Eigen::RowVectorXd EncodeOne(const domain::CovariateVector& x) const;
  const std::vector<FeatureColumn>& columns() const { return columns_; }

  nlohmann::json ToJson() const;
  static FeatureEncoder FromJson(const nlohmann::json& j);

 private:
  std::vector<FeatureColumn> columns_;
};

struct PropensityModel {
  FeatureEncoder encoder;
  LogisticFit fit;

  // e(x) clamped to [kPropensityFloor, 1 - kPropensityFloor].
  double Predict(const domain::CovariateVector& x) const;
  std::vector<double> Predict(
      std::span<const domain::CovariateVector> xs) const;

  nlohmann::json ToJson() const;
  static PropensityModel FromJson(const nlohmann::json& j);
};

PropensityModel FitPropensity(std::span<const domain::CovariateVector> xs,
                              std::span<const int> z,
                              const domain::CovariateSchema& schema,
                              const LogisticOptions& options = {});

double Clamp(double e);

enum class WeightScheme { kIpw, kOverlap, kEntropy };

std::string_view ToString(WeightScheme s);
WeightScheme ParseWeightScheme(std::string_view name);

// Tilting function h(e).
double Tilting(double e, WeightScheme scheme);

// w_1 = h/e for z = 1, w_0 = h/(1 - e) for z = 0. Requires 0 < e < 1.
double BalancingWeight(double e, int z, WeightScheme scheme);

std::vector<double> BalancingWeights(std::span<const double> e,
                                     std::span<const int> z,
                                     WeightScheme scheme);

// Weighted treated mean minus weighted control mean.
double Wate(std::span<const double> y, std::span<const int> z,
            std::span<const double> w);

struct BalanceRow {
  std::string covariate;
  double smd_raw = 0.0;
  double smd_weighted = 0.0;
  bool flagged = false;  // |smd_weighted| > 0.1
};

// Standardized mean differences per column of X. The denominator is the
// unweighted pooled standard deviation sqrt((var_1 + var_0) / 2); a
// zero-variance column has SMD 0.
std::vector<BalanceRow> BalanceDiagnostics(
    const Eigen::MatrixXd& X, std::span<const int> z,
    std::span<const double> w, const std::vector<std::string>& names);

struct PropensitySummary {
  double min = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double max = 0.0;
  long n_clamped = 0;
};

PropensitySummary Summarize(std::span<const double> e);

struct AteOptions {
  int n_boot = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  LogisticOptions logistic;
};

struct AteEstimate {
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double boot_se = 0.0;
  long n_treated = 0;
  long n_control = 0;
};

// Propensity fit on xs, balancing weights, WATE; percentile bootstrap over
// units (each replicate refits the propensity model).
AteEstimate WeightedAte(std::span<const domain::CovariateVector> xs,
                        std::span<const int> z, std::span<const double> y,
                        const domain::CovariateSchema& schema,
                        WeightScheme scheme, const AteOptions& options);

// Units whose follow-up covers k full days.
std::vector<domain::AnnotatedUnit> UnitsWithFollowup(
    const std::vector<domain::AnnotatedUnit>& units, int k_days);

// Distinct active days in (t0, t0 + 24k].
double ActiveDaysOutcome(const domain::AnnotatedUnit& unit, int k_days);

struct ActiveDaysResult {
  int k_days = 0;
  WeightScheme scheme = WeightScheme::kOverlap;
  AteEstimate ate;
  long n_excluded = 0;  // follow-up shorter than k days
  PropensitySummary propensity;
  std::vector<BalanceRow> balance;
};

ActiveDaysResult ActiveDaysAte(const std::vector<domain::AnnotatedUnit>& units,
                               int k_days, WeightScheme scheme,
                               const domain::CovariateSchema& schema,
                               const AteOptions& options);

}  // namespace fbloop::propensity
