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
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbloop/domain.hpp"

namespace fbloop::matching {

// Numeric rule: strictly increasing edges, bins [e_k, e_{k+1}).
// Categorical rule: optional level -> group map (unmapped levels stand alone).
struct CoarseningRule {
  std::string covariate;
  std::vector<double> edges;
  std::map<std::string, std::string> groups;
};

struct CoarseningSpec {
  std::vector<CoarseningRule> rules;

  void Validate() const;
  nlohmann::json ToJson() const;
};

// Bin of `value`; values outside [e_0, e_m) go to the boundary bin and set
// *out_of_range.
int BinIndex(double value, std::span<const double> edges,
             bool* out_of_range = nullptr);

using StratumKey = std::string;

struct CoarsenResult {
  StratumKey key;
  std::vector<std::string> warnings;
};

CoarsenResult Coarsen(const domain::CovariateVector& x,
                      const CoarseningSpec& spec);

// Quintile edges of the pooled values for numeric covariates (duplicates
// collapsed; last edge nudged above the maximum) and identity grouping for
// categoricals.
CoarseningSpec DefaultCoarsening(std::span<const domain::CovariateVector> xs,
                                 const std::vector<std::string>& covariates);

std::vector<std::string> DefaultCemCovariates();

struct CemResult {
  std::vector<StratumKey> keys;
  std::vector<double> weights;  // 0 for unmatched units
  long matched_treated = 0;
  long matched_control = 0;
  long unmatched_treated = 0;
  long unmatched_control = 0;
  long matched_strata = 0;
  double l1_before = 0.0;
  double l1_after = 0.0;

  nlohmann::json Summary() const;
};

// Standard CEM weights: treated 1; control in stratum s gets
// (m_T^s / m_C^s) * (M_C / M_T); strata lacking an arm get 0.
// Throws ComputationError when no stratum holds both arms.
CemResult CemMatch(const std::vector<StratumKey>& keys, std::span<const int> z);

// L1 distance between the (weighted) per-stratum relative frequencies of the
// two arms: 1/2 sum_s |f_1(s) - f_0(s)|.
double L1Imbalance(const std::vector<StratumKey>& keys, std::span<const int> z,
                   std::span<const double> weights);

struct CemAte {
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double boot_se = 0.0;
  CemResult match;
};

struct CemOptions {
  int n_boot = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

// Matched-sample weighted difference in means; the bootstrap resamples units
// and re-matches within each replicate.
CemAte EstimateCemAte(std::span<const double> y, std::span<const int> z,
                      const std::vector<StratumKey>& keys,
                      const CemOptions& options);

// Point estimate only.
double CemDifference(std::span<const double> y, std::span<const int> z,
                     const CemResult& result);

}  // namespace fbloop::matching
