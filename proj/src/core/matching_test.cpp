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

#include <array>
#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "fbloop/error.hpp"
#include "fbloop/propensity.hpp"

namespace fbloop::matching {
namespace {

TEST_CASE("bin lookup is left-closed and right-open") {
  const std::vector<double> edges = {0, 10, 20};
  CHECK(BinIndex(7, edges) == 0);
  CHECK(BinIndex(15, edges) == 1);
  CHECK(BinIndex(10, edges) == 1);
  CHECK(BinIndex(0, edges) == 0);
  bool outside = false;
  CHECK(BinIndex(25, edges, &outside) == 1);
  CHECK(outside);
  CHECK(BinIndex(-3, edges, &outside) == 0);
  CHECK(outside);
  CHECK(BinIndex(19.999, edges, &outside) == 1);
  CHECK_FALSE(outside);
}

TEST_CASE("coarsen is deterministic and warns on out-of-range values") {
  CoarseningSpec spec;
  spec.rules = {{"wer", {0.0, 0.1, 0.3}, {}},
                {"device_type", {}, {{"speaker", "home"}, {"watch", "mobile"}, {"phone", "mobile"}}}};
  spec.Validate();
  domain::CovariateVector x;
  x.wer = 0.15;
  x.device_type = "watch";
  auto a = Coarsen(x, spec);
  auto b = Coarsen(x, spec);
  CHECK(a.key == b.key);
  CHECK(a.key == "1|mobile");
  CHECK(a.warnings.empty());
  x.device_type = "phone";
  CHECK(Coarsen(x, spec).key == "1|mobile");
  x.wer = 0.9;
  auto c = Coarsen(x, spec);
  CHECK(c.key == "1|mobile");
  CHECK(c.warnings.size() == 1);
}

TEST_CASE("coarsening spec validation") {
  CoarseningSpec bad;
  bad.rules = {{"wer", {0.3, 0.1}, {}}};
  CHECK_THROWS_AS(bad.Validate(), Error);
  bad.rules = {{"shoe_size", {}, {}}};
  CHECK_THROWS_AS(bad.Validate(), Error);
  bad.rules = {{"wer", {0.0, 1.0}, {}}, {"wer", {0.0, 1.0}, {}}};
  CHECK_THROWS_AS(bad.Validate(), Error);
}

TEST_CASE("default coarsening covers the observed range") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u;
  std::vector<domain::CovariateVector> xs(300);
  for (auto& x : xs) {
    x.wer = u(gen) * 0.5;
    x.prior_active_days = static_cast<int>(u(gen) * 4);  // few distinct values
    x.device_type = "phone";
  }
  auto spec = DefaultCoarsening(xs, {"wer", "prior_active_days", "device_type"});
  spec.Validate();
  for (const auto& x : xs) CHECK(Coarsen(x, spec).warnings.empty());
  CHECK(spec.rules[0].edges.size() == 6);  // quintiles
}

TEST_CASE("a single balanced stratum gets unit weights") {
  std::vector<StratumKey> keys(4, "a");
  std::vector<int> z = {1, 0, 1, 0};
  auto r = CemMatch(keys, z);
  for (double w : r.weights) CHECK(w == 1.0);
  CHECK(r.matched_strata == 1);
  CHECK(r.l1_after == 0.0);
}

TEST_CASE("a stratum with one arm is unmatched") {
  std::vector<StratumKey> keys = {"a", "a", "b", "b"};
  std::vector<int> z = {1, 0, 1, 1};
  auto r = CemMatch(keys, z);
  CHECK(r.weights[2] == 0.0);
  CHECK(r.weights[3] == 0.0);
  CHECK(r.unmatched_treated == 2);
  CHECK(r.matched_treated == 1);
  CHECK(r.matched_control == 1);
  std::vector<int> all_treated = {1, 1, 1, 1};
  CHECK_THROWS_AS(CemMatch(keys, all_treated), Error);
}

TEST_CASE("hand-computed CEM weights") {
  // Stratum s1: 2 treated, 4 control. Stratum s2: 1 treated, 1 control.
  std::vector<StratumKey> keys = {"s1", "s1", "s1", "s1", "s1", "s1", "s2", "s2"};
  std::vector<int> z = {1, 1, 0, 0, 0, 0, 1, 0};
  auto r = CemMatch(keys, z);
  CHECK(r.weights[0] == 1.0);
  CHECK(r.weights[6] == 1.0);
  for (int i = 2; i < 6; ++i) CHECK(r.weights[i] == (2.0 / 4.0) * (5.0 / 3.0));
  CHECK(r.weights[7] == (1.0 / 1.0) * (5.0 / 3.0));
  // Within each stratum the control weight total is m_T * M_C / M_T.
  CHECK(4 * r.weights[2] == doctest::Approx(2.0 * 5.0 / 3.0));
}

TEST_CASE("cem estimate of Y = Z is one") {
  std::vector<StratumKey> keys = {"a", "a", "b", "b", "b"};
  std::vector<int> z = {1, 0, 1, 0, 0};
  std::vector<double> y = {1, 0, 1, 0, 0};
  CemOptions opt;
  opt.n_boot = 0;
  CHECK(EstimateCemAte(y, z, keys, opt).estimate == 1.0);
}

struct DiscreteData {
  std::vector<StratumKey> keys;
  std::vector<int> z;
  std::vector<double> y;
  std::vector<int> c;
};

DiscreteData Discrete(int n, double tau, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> conf(0, 4);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> noise(0.0, 1.0);
  DiscreteData d;
  for (int i = 0; i < n; ++i) {
    const int c = conf(gen);
    const int z = u(gen) < 0.15 + 0.17 * c;
    d.keys.push_back(std::to_string(c));
    d.z.push_back(z);
    d.c.push_back(c);
    d.y.push_back(1.5 * c + tau * z + noise(gen));
  }
  return d;
}

TEST_CASE("cem recovers a planted effect under discrete confounding") {
  auto d = Discrete(10000, 2.0, 7);
  CemOptions opt;
  opt.n_boot = 100;
  opt.seed = 3;
  auto est = EstimateCemAte(d.y, d.z, d.keys, opt);
  CHECK(std::abs(est.estimate - 2.0) < 0.1);
  CHECK(est.ci_low <= 2.0);
  CHECK(est.ci_high >= 2.0);
  // The naive difference is badly confounded.
  double s[2] = {0, 0}, n[2] = {0, 0};
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    s[d.z[i]] += d.y[i];
    n[d.z[i]] += 1;
  }
  CHECK(s[1] / n[1] - s[0] / n[0] > 2.5);
}

TEST_CASE("cem on a null simulation covers zero") {
  auto d = Discrete(4000, 0.0, 8);
  CemOptions opt;
  opt.n_boot = 200;
  opt.seed = 5;
  auto est = EstimateCemAte(d.y, d.z, d.keys, opt);
  CHECK(est.ci_low <= 0.0);
  CHECK(est.ci_high >= 0.0);
}

TEST_CASE("cem equals wate with cem weights") {
  auto d = Discrete(3000, 1.0, 9);
  auto r = CemMatch(d.keys, d.z);
  std::vector<double> y, w;
  std::vector<int> z;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    if (r.weights[i] == 0.0) continue;
    y.push_back(d.y[i]);
    z.push_back(d.z[i]);
    w.push_back(r.weights[i]);
  }
  CHECK(std::abs(CemDifference(d.y, d.z, r) - propensity::Wate(y, z, w)) <= 1e-12);
}

TEST_CASE("cem with singleton covariate strata is exact matching") {
  auto d = Discrete(2000, 1.0, 10);
  // Exact matching effect on the treated: per-stratum mean differences
  // averaged with treated counts.
  std::map<StratumKey, std::array<double, 4>> acc;  // sum1, n1, sum0, n0
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    auto& a = acc[d.keys[i]];
    a[d.z[i] ? 0 : 2] += d.y[i];
    a[d.z[i] ? 1 : 3] += 1;
  }
  double num = 0.0, den = 0.0;
  for (const auto& [k, a] : acc) {
    if (a[1] == 0 || a[3] == 0) continue;
    num += a[1] * (a[0] / a[1] - a[2] / a[3]);
    den += a[1];
  }
  auto r = CemMatch(d.keys, d.z);
  CHECK(CemDifference(d.y, d.z, r) == doctest::Approx(num / den).epsilon(1e-12));
}

TEST_CASE("refining bins tightens the matched mean-difference bound") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u;
  std::vector<double> v;
  std::vector<int> z;
  for (int i = 0; i < 5000; ++i) {
    v.push_back(u(gen));
    z.push_back(u(gen) < 0.2 + 0.6 * v.back());
  }
  auto imbalance = [&](int bins, double* l1_after) {
    std::vector<double> edges;
    for (int b = 0; b <= bins; ++b) edges.push_back(static_cast<double>(b) / bins);
    edges.back() = std::nextafter(1.0, 2.0);
    std::vector<StratumKey> keys;
    for (double x : v) keys.push_back(std::to_string(BinIndex(x, edges)));
    auto r = CemMatch(keys, z);
    *l1_after = r.l1_after;
    double s1 = 0, w1 = 0, s0 = 0, w0 = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      (z[i] ? s1 : s0) += r.weights[i] * v[i];
      (z[i] ? w1 : w0) += r.weights[i];
    }
    return std::abs(s1 / w1 - s0 / w0);
  };
  double coarse_l1 = 0.0, fine_l1 = 0.0;
  const double coarse = imbalance(4, &coarse_l1);
  const double fine = imbalance(16, &fine_l1);
  CHECK(coarse <= 1.0 / 4);
  CHECK(fine <= 1.0 / 16);
  CHECK(fine <= coarse);
  CHECK(fine_l1 <= coarse_l1 + 1e-15);
  CHECK(coarse_l1 <= 1e-12);
}

TEST_CASE("cem bootstrap is thread independent and the summary is complete") {
  auto d = Discrete(1000, 0.5, 12);
  CemOptions a;
  a.n_boot = 50;
  a.seed = 1;
  a.threads = 1;
  CemOptions b = a;
  b.threads = 4;
  auto ea = EstimateCemAte(d.y, d.z, d.keys, a);
  auto eb = EstimateCemAte(d.y, d.z, d.keys, b);
  CHECK(ea.ci_low == eb.ci_low);
  CHECK(ea.ci_high == eb.ci_high);
  auto s = ea.match.Summary();
  for (const char* key : {"matched_treated", "matched_control", "unmatched_treated",
                          "unmatched_control", "l1_before", "l1_after"}) {
    CHECK(s.contains(key));
  }
}

}  // namespace
}  // namespace fbloop::matching
