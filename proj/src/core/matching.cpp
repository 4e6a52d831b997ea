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
#include "fbloop/matching.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "fbloop/bootstrap.hpp"
#include "fbloop/error.hpp"
#include "fbloop/format.hpp"
#include "fbloop/parallel.hpp"

namespace fbloop::matching {

void CoarseningSpec::Validate() const {
  std::set<std::string> seen;
  for (const auto& r : rules) {
    if (!seen.insert(r.covariate).second) {
      throw ValidationError("coarsening: duplicate rule for `" + r.covariate + "`");
    }
    if (domain::IsNumericCovariate(r.covariate)) {
      if (r.edges.size() < 2) {
        throw ValidationError("coarsening: `" + r.covariate + "` needs >= 2 edges");
      }
      for (std::size_t k = 1; k < r.edges.size(); ++k) {
        if (!(r.edges[k] > r.edges[k - 1])) {
          throw ValidationError("coarsening: `" + r.covariate +
                                "` edges must be strictly increasing");
        }
      }
    } else if (!domain::IsCategoricalCovariate(r.covariate)) {
      throw ValidationError("coarsening: unknown covariate `" + r.covariate + "`");
    }
  }
}

nlohmann::json CoarseningSpec::ToJson() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rules) {
    nlohmann::json j = {{"covariate", r.covariate}};
    if (!r.edges.empty()) j["edges"] = r.edges;
    if (!r.groups.empty()) j["groups"] = r.groups;
    arr.push_back(std::move(j));
  }
  return arr;
}

int BinIndex(double value, std::span<const double> edges, bool* out_of_range) {
  const int bins = static_cast<int>(edges.size()) - 1;
  if (bins < 1) throw ValidationError("coarsening: need at least two edges");
  bool outside = false;
  int bin;
  if (value < edges.front()) {
    bin = 0;
    outside = true;
  } else if (value >= edges.back()) {
    bin = bins - 1;
    outside = true;
  } else {
    // Left-closed, right-open.
    bin = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), value) -
                           edges.begin()) - 1;
  }
  if (out_of_range) *out_of_range = outside;
  return bin;
}

CoarsenResult Coarsen(const domain::CovariateVector& x,
                      const CoarseningSpec& spec) {
  CoarsenResult out;
  for (std::size_t k = 0; k < spec.rules.size(); ++k) {
    const auto& r = spec.rules[k];
    if (k) out.key += '|';
    if (domain::IsNumericCovariate(r.covariate)) {
      const double v = domain::NumericCovariate(x, r.covariate);
      bool outside = false;
      out.key += std::to_string(BinIndex(v, r.edges, &outside));
      if (outside) {
        out.warnings.push_back("`" + r.covariate + "` value " + FormatDouble(v) +
                               " outside bin range; assigned to boundary bin");
      }
    } else {
      const auto& level = domain::CategoricalCovariate(x, r.covariate);
      auto it = r.groups.find(level);
      out.key += it == r.groups.end() ? level : it->second;
    }
  }
  return out;
}

std::vector<std::string> DefaultCemCovariates() {
  return {"prior_active_days", "wer", "nlu_confidence", "token_count",
          "device_type"};
}

CoarseningSpec DefaultCoarsening(std::span<const domain::CovariateVector> xs,
                                 const std::vector<std::string>& covariates) {
  if (xs.empty()) throw ValidationError("coarsening: no data");
  CoarseningSpec spec;
  for (const auto& name : covariates) {
    CoarseningRule r;
    r.covariate = name;
    if (domain::IsNumericCovariate(name)) {
      std::vector<double> v;
      v.reserve(xs.size());
      for (const auto& x : xs) v.push_back(domain::NumericCovariate(x, name));
      const double lo = *std::min_element(v.begin(), v.end());
      const double hi = *std::max_element(v.begin(), v.end());
      std::vector<double> edges = {lo};
      for (double q : {0.2, 0.4, 0.6, 0.8}) {
        const double e = Quantile(v, q);
        if (e > edges.back()) edges.push_back(e);
      }
      const double top = std::nextafter(hi, INFINITY);
      if (top > edges.back()) edges.push_back(top);
      if (edges.size() < 2) edges.push_back(std::nextafter(lo, INFINITY));
      r.edges = std::move(edges);
    } else if (!domain::IsCategoricalCovariate(name)) {
      throw ValidationError("coarsening: unknown covariate `" + name + "`");
    }
    spec.rules.push_back(std::move(r));
  }
  return spec;
}

namespace {

struct StratumCounts {
  long treated = 0;
  long control = 0;
};

std::unordered_map<StratumKey, StratumCounts> Count(
    const std::vector<StratumKey>& keys, std::span<const int> z) {
  std::unordered_map<StratumKey, StratumCounts> counts;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto& c = counts[keys[i]];
    (z[i] == 1 ? c.treated : c.control)++;
  }
  return counts;
}

}  // namespace

double L1Imbalance(const std::vector<StratumKey>& keys, std::span<const int> z,
                   std::span<const double> weights) {
  std::map<StratumKey, std::pair<double, double>> mass;
  double tot1 = 0.0, tot0 = 0.0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto& m = mass[keys[i]];
    if (z[i] == 1) {
      m.first += weights[i];
      tot1 += weights[i];
    } else {
      m.second += weights[i];
      tot0 += weights[i];
    }
  }
  if (!(tot1 > 0.0) || !(tot0 > 0.0)) return 1.0;
  double l1 = 0.0;
  for (const auto& [k, m] : mass) l1 += std::abs(m.first / tot1 - m.second / tot0);
  return 0.5 * l1;
}

CemResult CemMatch(const std::vector<StratumKey>& keys, std::span<const int> z) {
  if (keys.size() != z.size()) throw ValidationError("cem: length mismatch");
  const auto counts = Count(keys, z);
  CemResult res;
  res.keys = keys;
  long mt = 0, mc = 0;
  for (const auto& [k, c] : counts) {
    if (c.treated > 0 && c.control > 0) {
      mt += c.treated;
      mc += c.control;
      ++res.matched_strata;
    }
  }
  if (res.matched_strata == 0) {
    throw ComputationError("cem: no stratum contains both arms");
  }
  res.weights.assign(keys.size(), 0.0);
  const double ratio = static_cast<double>(mc) / static_cast<double>(mt);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto& c = counts.at(keys[i]);
    const bool matched = c.treated > 0 && c.control > 0;
    if (z[i] == 1) {
      if (matched) {
        res.weights[i] = 1.0;
        ++res.matched_treated;
      } else {
        ++res.unmatched_treated;
      }
    } else {
      if (matched) {
        res.weights[i] = static_cast<double>(c.treated) /
                         static_cast<double>(c.control) * ratio;
        ++res.matched_control;
      } else {
        ++res.unmatched_control;
      }
    }
  }
  const std::vector<double> ones(keys.size(), 1.0);
  res.l1_before = L1Imbalance(keys, z, ones);
  res.l1_after = L1Imbalance(keys, z, res.weights);
  return res;
}

nlohmann::json CemResult::Summary() const {
  return {{"matched_treated", matched_treated},
          {"matched_control", matched_control},
          {"unmatched_treated", unmatched_treated},
          {"unmatched_control", unmatched_control},
          {"matched_strata", matched_strata},
          {"l1_before", l1_before},
          {"l1_after", l1_after},
          {"estimand", "matched-population effect; unmatched units excluded"}};
}

double CemDifference(std::span<const double> y, std::span<const int> z,
                     const CemResult& result) {
  // Treated weights are all 1, so the treated side is a plain mean.
  double sum1 = 0.0, n1 = 0.0, sum0 = 0.0, w0 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double w = result.weights[i];
    if (w == 0.0) continue;
    if (z[i] == 1) {
      sum1 += y[i];
      n1 += 1.0;
    } else {
      sum0 += w * y[i];
      w0 += w;
    }
  }
  if (n1 == 0.0 || w0 == 0.0) throw ComputationError("cem: empty matched set");
  return sum1 / n1 - sum0 / w0;
}

CemAte EstimateCemAte(std::span<const double> y, std::span<const int> z,
                      const std::vector<StratumKey>& keys,
                      const CemOptions& options) {
  if (y.size() != z.size() || z.size() != keys.size()) {
    throw ValidationError("cem: length mismatch");
  }
  CemAte out;
  out.match = CemMatch(keys, z);
  out.estimate = CemDifference(y, z, out.match);

  const std::size_t n = y.size();
  const std::size_t reps = static_cast<std::size_t>(std::max(options.n_boot, 0));
  std::vector<double> boot(reps);
  ParallelFor(reps, options.threads, [&](std::size_t r) {
    const auto idx = ResampleIndices(n, options.seed, r);
    std::vector<StratumKey> bk;
    std::vector<int> bz;
    std::vector<double> by;
    bk.reserve(n);
    bz.reserve(n);
    by.reserve(n);
    for (auto i : idx) {
      bk.push_back(keys[i]);
      bz.push_back(z[i]);
      by.push_back(y[i]);
    }
    boot[r] = CemDifference(by, bz, CemMatch(bk, bz));
  });
  if (reps > 0) {
    const auto ci = PercentileInterval(boot, options.level);
    out.ci_low = std::min(ci.low, out.estimate);
    out.ci_high = std::max(ci.high, out.estimate);
    out.boot_se = StdDev(boot);
  } else {
    out.ci_low = out.ci_high = out.estimate;
  }
  return out;
}

}  // namespace fbloop::matching
