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

#include "doctest.h"
#include "fbloop/error.hpp"

namespace fbloop::bias {
namespace {

TEST_CASE("exact error vanishes without a feedback gap") {
  CHECK(ExactError({0.6, 0.7, 0.0, 1000, 300}) == 0.0);
}

TEST_CASE("exact error tends to zero at the s limits") {
  CHECK(ExactError({1e-12, 0.7, 0.3, 1000, 300}) < 1e-11);
  CHECK(ExactError({1.0 - 1e-12, 0.7, 0.3, 1000, 300}) < 1e-11);
}

TEST_CASE("exact error on the worked scenario") {
  // Independent evaluation: 0.6*0.3*0.4 / (0.7 - 0.3 + 0.6*0.3 + 0.3).
  const double numerator = 0.6 * 0.3 * 0.4;
  const double denominator = 0.7 - 0.3 + 0.18 + 0.3;
  CHECK(ExactError({0.6, 0.7, 0.3, 100000, 30000}) ==
        doctest::Approx(numerator / denominator).epsilon(1e-15));
  CHECK(numerator / denominator == doctest::Approx(0.0818181818181818).epsilon(1e-12));
}

TEST_CASE("exact error is nonnegative over a parameter grid") {
  for (double s = 0.05; s < 1.0; s += 0.1) {
    for (double p = 0.1; p <= 1.0; p += 0.1) {
      for (double dp = 0.0; dp <= p; dp += 0.05) {
        CHECK(ExactError({s, p, dp, 1000, 250}) >= 0.0);
      }
    }
  }
}

TEST_CASE("exact error rejects invalid scenarios") {
  CHECK_THROWS_AS(ExactError({0.6, 0.2, 0.3, 100, 0}), Error);
  CHECK_THROWS_AS(ExactError({1.2, 0.7, 0.3, 100, 0}), Error);
  CHECK_THROWS_AS(ExactError({0.6, 0.7, 0.3, 0, 0}), Error);
  // p = delta_p and s * delta_p = 0 only at s = 0, excluded; zero N' and
  // p = delta_p leaves s * delta_p > 0, so no zero denominator is reachable
  // inside the domain.
  CHECK(ExactError({0.5, 0.4, 0.4, 10, 0}) > 0.0);
}

TEST_CASE("approx error reproduces the 68 percent example") {
  const double e = ApproxError(0.6, 0.3);
  CHECK(e == doctest::Approx(0.072 / 0.88).epsilon(1e-15));
  CHECK(std::round(1e4 * (0.6 + e)) / 1e2 == 68.18);
  CHECK(std::round(100.0 * (0.6 + e)) == 68.0);
}

TEST_CASE("approx error identities") {
  CHECK(ApproxError(0.3, 0.0) == 0.0);
  for (double s = 0.05; s < 1.0; s += 0.05) {
    for (double dp = 0.0; dp <= 1.0; dp += 0.05) {
      const double e = ApproxError(s, dp);
      CHECK(e * (1.0 - dp * (1.0 - s)) ==
            doctest::Approx(s * dp * (1.0 - s)).epsilon(1e-14));
    }
  }
}

TEST_CASE("approx equals exact at the equilibrium joiner count") {
  for (double s : {0.2, 0.6, 0.9}) {
    for (double p : {0.5, 0.8, 1.0}) {
      for (double dp : {0.0, 0.1, 0.3}) {
        const long n = 100000;
        const auto joiners = static_cast<long>(std::lround((1.0 - p) * n));
        CHECK(ExactError({s, p, dp, n, joiners}) ==
              doctest::Approx(ApproxError(s, dp)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("approx error domain errors") {
  CHECK_THROWS_AS(ApproxError(0.0, 0.1), Error);
  CHECK_THROWS_AS(ApproxError(0.5, -0.1), Error);
  CHECK_THROWS_AS(ApproxError(0.5, 2.0), Error);  // denominator 0
  CHECK_THROWS_AS(ApproxError(0.5, 3.0), Error);
}

TEST_CASE("error sweep is s-major, zero at the origin and increasing") {
  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(0.01 * i);
  const std::vector<double> s_values = {0.4, 0.5, 0.6, 0.7};
  const auto rows = ErrorSweep(s_values, grid);
  REQUIRE(rows.size() == s_values.size() * grid.size());
  for (std::size_t a = 0; a < s_values.size(); ++a) {
    const auto* series = &rows[a * grid.size()];
    CHECK(series[0].s == s_values[a]);
    CHECK(series[0].epsilon_hat == 0.0);
    for (std::size_t i = 1; i < grid.size(); ++i) {
      CHECK(series[i].epsilon_hat > series[i - 1].epsilon_hat);
    }
  }
  const auto csv = SweepCsv(rows);
  CHECK(csv.rfind("s,delta_p,epsilon_hat\n", 0) == 0);
}

TEST_CASE("survey estimate counts active users in the current period") {
  PeriodPanel panel;
  panel.scenario = {0.5, 1.0, 0.0, 4, 0};
  panel.units = {{true, true, true}, {false, true, true}, {true, true, false},
                 {false, true, false}};
  const auto est = EstimateSurvey(panel);
  CHECK(est.n_active == 2);
  CHECK(est.n_satisfied_active == 1);
  CHECK(est.s_hat == 0.5);
  CHECK(est.error == 0.0);
  for (auto& u : panel.units) u.active_cur = false;
  CHECK_THROWS_AS(EstimateSurvey(panel), Error);
}

}  // namespace
}  // namespace fbloop::bias
