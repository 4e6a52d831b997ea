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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fbloop/rng.hpp"

namespace fbloop {

// Linear-interpolation quantile (R type 7) of unsorted values.
inline double Quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return NAN;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

inline Interval PercentileInterval(const std::vector<double>& v,
                                   double level = 0.95) {
  const double a = (1.0 - level) / 2.0;
  return {Quantile(v, a), Quantile(v, 1.0 - a)};
}

inline double StdDev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Indices of one bootstrap resample of n units for replicate `r`.
inline std::vector<std::size_t> ResampleIndices(std::size_t n,
                                                std::uint64_t seed,
                                                std::size_t r) {
  Rng rng(DeriveSeed(DeriveSeed(seed, "bootstrap"), r));
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.Below(n);
  return idx;
}

}  // namespace fbloop
