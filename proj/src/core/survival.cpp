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
#include "fbloop/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fbloop/bootstrap.hpp"
#include "fbloop/error.hpp"
#include "fbloop/format.hpp"
#include "fbloop/parallel.hpp"

namespace fbloop::survival {

std::vector<SurvivalObservation> FromUnits(
    const std::vector<domain::AnnotatedUnit>& units) {
  std::vector<SurvivalObservation> obs;
  obs.reserve(units.size());
  for (const auto& u : units) {
    if (!(u.time_to_next_h > 0.0)) continue;
    obs.push_back({u.time_to_next_h, u.event, u.z, u.x});
  }
  return obs;
}

KaplanMeier::KaplanMeier(std::span<const double> times,
                         std::span<const int> events) {
  if (times.size() != events.size()) {
    throw ValidationError("kaplan-meier: length mismatch");
  }
  std::vector<std::pair<double, int>> data;
  data.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    data.emplace_back(times[i], events[i]);
  }
  Build(std::move(data));
}

KaplanMeier::KaplanMeier(std::span<const SurvivalObservation> obs) {
  std::vector<std::pair<double, int>> data;
  data.reserve(obs.size());
  for (const auto& o : obs) data.emplace_back(o.t_obs, o.event);
  Build(std::move(data));
}

void KaplanMeier::Build(std::vector<std::pair<double, int>> data) {
  if (data.empty()) throw ValidationError("kaplan-meier: no observations");
  for (const auto& [t, e] : data) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw ValidationError("kaplan-meier: observed times must be finite and > 0");
    }
    if (e != 0 && e != 1) throw ValidationError("kaplan-meier: event must be 0/1");
  }
  // Events sort ahead of censorings at equal times.
  std::sort(data.begin(), data.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;
  });
  n_ = data.size();
  last_time_ = data.back().first;
  first_censor_ = std::numeric_limits<double>::infinity();
  for (const auto& [t, e] : data) {
    if (e == 0) {
      first_censor_ = t;
      break;
    }
  }

  std::size_t i = 0;
  while (i < data.size()) {
    const double t = data[i].first;
    std::size_t j = i;
    long d = 0;
    while (j < data.size() && data[j].first == t) {
      d += data[j].second;
      ++j;
    }
    if (d > 0) {
      times_.push_back(t);
      at_risk_.push_back(static_cast<long>(data.size() - i));
      events_.push_back(d);
    }
    i = j;
  }

  const std::size_t m = times_.size();
  segment_prefix_.resize(m);
  segment_start_n_.resize(m);
  greenwood_sum_.resize(m);
  double gw = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    if (k == 0) {
      segment_prefix_[k] = 1.0;
      segment_start_n_[k] = at_risk_[k];
    } else if (at_risk_[k] == at_risk_[k - 1] - events_[k - 1]) {
      segment_prefix_[k] = segment_prefix_[k - 1];
      segment_start_n_[k] = segment_start_n_[k - 1];
    } else {
      segment_prefix_[k] = segment_prefix_[k - 1] *
                           static_cast<double>(at_risk_[k - 1] - events_[k - 1]) /
                           static_cast<double>(segment_start_n_[k - 1]);
      segment_start_n_[k] = at_risk_[k];
    }
    const long left = at_risk_[k] - events_[k];
    gw += left > 0 ? static_cast<double>(events_[k]) /
                         (static_cast<double>(at_risk_[k]) * left)
                   : std::numeric_limits<double>::infinity();
    greenwood_sum_[k] = gw;
  }
}

std::size_t KaplanMeier::EventsBefore(double t) const {
  return static_cast<std::size_t>(
      std::lower_bound(times_.begin(), times_.end(), t) - times_.begin());
}

double KaplanMeier::Survival(double t) const {
  if (!(t > 0.0)) throw DomainError("kaplan-meier: t must be > 0");
  const std::size_t J = EventsBefore(t);
  if (J == 0) return 1.0;
  const std::size_t k = J - 1;
  return segment_prefix_[k] * static_cast<double>(at_risk_[k] - events_[k]) /
         static_cast<double>(segment_start_n_[k]);
}

double KaplanMeier::GreenwoodVariance(double t) const {
  const double s = Survival(t);
  const std::size_t J = EventsBefore(t);
  if (J == 0 || s == 0.0) return 0.0;
  return s * s * greenwood_sum_[J - 1];
}

double KaplanMeierSurvival(std::span<const SurvivalObservation> obs, double t) {
  if (!(t > 0.0)) throw DomainError("kaplan-meier: t must be > 0");
  return KaplanMeier(obs).Survival(t);
}

PseudoObservations::PseudoObservations(std::span<const double> times,
                                       std::span<const int> events)
    : times_(times.begin(), times.end()),
      events_(events.begin(), events.end()),
      km_(times, events) {
  if (times_.size() < 2) {
    throw ValidationError("pseudo-observations: need at least two units");
  }
  const auto& u = km_.event_times();
  const auto& n = km_.at_risk();
  const auto& d = km_.events();
  const std::size_t m = u.size();
  pa_.assign(m + 1, 1.0);
  pb_.assign(m + 1, 1.0);
  za_.assign(m + 1, 0);
  zb_.assign(m + 1, 0);
  for (std::size_t j = 0; j < m; ++j) {
    const double a = 1.0 - static_cast<double>(d[j]) / static_cast<double>(n[j]);
    const double b =
        n[j] > 1 ? 1.0 - static_cast<double>(d[j]) / static_cast<double>(n[j] - 1)
                 : 1.0;
    pa_[j + 1] = a == 0.0 ? pa_[j] : pa_[j] * a;
    za_[j + 1] = za_[j] + (a == 0.0 ? 1 : 0);
    pb_[j + 1] = b == 0.0 ? pb_[j] : pb_[j] * b;
    zb_[j + 1] = zb_[j] + (b == 0.0 ? 1 : 0);
  }
  first_at_or_after_.resize(times_.size());
  for (std::size_t i = 0; i < times_.size(); ++i) {
    first_at_or_after_[i] = static_cast<std::size_t>(
        std::lower_bound(u.begin(), u.end(), times_[i]) - u.begin());
  }
}

void PseudoObservations::Column(double t, std::span<double> out) const {
  if (!(t > 0.0)) throw DomainError("pseudo-observations: t must be > 0");
  const std::size_t N = times_.size();
  if (out.size() != N) throw ValidationError("pseudo-observations: bad output size");

  // Before the first censoring the estimator is the empirical proportion
  // #{T >= t} / N; the jackknife of that linear statistic is the indicator.
  if (t <= km_.first_censor_time()) {
    for (std::size_t i = 0; i < N; ++i) out[i] = times_[i] >= t ? 1.0 : 0.0;
    return;
  }

  const auto& u = km_.event_times();
  const auto& n = km_.at_risk();
  const auto& d = km_.events();
  const std::size_t J = static_cast<std::size_t>(
      std::lower_bound(u.begin(), u.end(), t) - u.begin());
  auto range_a = [&](std::size_t lo, std::size_t hi) {
    if (lo >= hi) return 1.0;
    return za_[hi] - za_[lo] > 0 ? 0.0 : pa_[hi] / pa_[lo];
  };
  auto range_b = [&](std::size_t lo, std::size_t hi) {
    if (lo >= hi) return 1.0;
    return zb_[hi] - zb_[lo] > 0 ? 0.0 : pb_[hi] / pb_[lo];
  };

  const double s = km_.Survival(t);
  const double dn = static_cast<double>(N);
  const double all_at_risk = range_b(0, J);
  for (std::size_t i = 0; i < N; ++i) {
    double loo;
    if (times_[i] >= t) {
      loo = all_at_risk;
    } else {
      const std::size_t k = first_at_or_after_[i];
      double tie = 1.0;
      std::size_t next = k;
      if (k < J && u[k] == times_[i]) {
        if (events_[i] == 1) {
          tie = n[k] > 1 ? 1.0 - static_cast<double>(d[k] - 1) /
                                     static_cast<double>(n[k] - 1)
                         : 1.0;
        } else {
          tie = n[k] > 1 ? 1.0 - static_cast<double>(d[k]) /
                                     static_cast<double>(n[k] - 1)
                         : 1.0;
        }
        next = k + 1;
      }
      loo = range_b(0, k) * tie * range_a(next, J);
    }
    out[i] = dn * s - (dn - 1.0) * loo;
  }
}

PseudoObservationMatrix ComputePseudoObservations(
    std::span<const SurvivalObservation> obs, const std::vector<double>& grid) {
  std::vector<double> times;
  std::vector<int> events;
  for (const auto& o : obs) {
    times.push_back(o.t_obs);
    events.push_back(o.event);
  }
  PseudoObservations po(times, events);
  PseudoObservationMatrix m;
  m.grid = grid;
  m.values.assign(obs.size(), std::vector<double>(grid.size()));
  std::vector<double> col(obs.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    po.Column(grid[g], col);
    for (std::size_t i = 0; i < obs.size(); ++i) m.values[i][g] = col[i];
  }
  return m;
}

namespace {

struct ArmProbabilities {
  std::vector<double> tau, p1, p0;
};

ArmProbabilities EstimateCurve(std::span<const SurvivalObservation> obs,
                               const std::vector<double>& grid,
                               const domain::CovariateSchema& schema,
                               const RpceOptions& opt, unsigned threads,
                               std::vector<double>* propensity_out = nullptr) {
  const std::size_t n = obs.size();
  std::vector<double> times(n);
  std::vector<int> events(n), z(n);
  std::vector<domain::CovariateVector> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    times[i] = obs[i].t_obs;
    events[i] = obs[i].event;
    z[i] = obs[i].z;
    xs[i] = obs[i].x;
  }
  PseudoObservations po(times, events);
  const auto model = propensity::FitPropensity(xs, z, schema, opt.logistic);
  const auto e = model.Predict(xs);
  const auto w = propensity::BalancingWeights(e, z, opt.scheme);
  if (propensity_out) *propensity_out = e;

  double w1 = 0.0, w0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) (z[i] == 1 ? w1 : w0) += w[i];
  if (!(w1 > 0.0) || !(w0 > 0.0)) {
    throw ComputationError("rpce: an arm has zero total weight");
  }

  ArmProbabilities out;
  out.tau.resize(grid.size());
  out.p1.resize(grid.size());
  out.p0.resize(grid.size());
  ParallelFor(grid.size(), threads, [&](std::size_t g) {
    std::vector<double> col(n);
    po.Column(grid[g], col);
    double s1 = 0.0, s0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      (z[i] == 1 ? s1 : s0) += w[i] * col[i];
    }
    out.p1[g] = 1.0 - s1 / w1;
    out.p0[g] = 1.0 - s0 / w0;
    out.tau[g] = out.p1[g] - out.p0[g];
  });
  return out;
}

}  // namespace

RpceCurve RpcePipeline(std::span<const SurvivalObservation> obs,
                       const std::vector<double>& grid,
                       const domain::CovariateSchema& schema,
                       const RpceOptions& opt) {
  if (grid.empty()) throw ValidationError("rpce: empty grid");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (!(grid[g] > 0.0) || (g > 0 && !(grid[g] > grid[g - 1]))) {
      throw ValidationError("rpce: grid must be positive and strictly increasing");
    }
  }
  long n1 = 0;
  for (const auto& o : obs) n1 += o.z;
  if (n1 == 0 || n1 == static_cast<long>(obs.size())) {
    throw ValidationError("rpce: both arms must be nonempty");
  }

  RpceCurve curve;
  curve.grid = grid;
  curve.scheme = opt.scheme;
  const double last = KaplanMeier(obs).last_time();
  std::size_t beyond = 0;
  for (double t : grid) beyond += t > last ? 1 : 0;
  if (beyond > 0) {
    curve.warnings.push_back(std::to_string(beyond) +
                             " grid time(s) beyond the last observed time " +
                             FormatDouble(last) + "; estimate carried flat");
  }

  std::vector<double> e;
  const auto point = EstimateCurve(obs, grid, schema, opt, opt.threads, &e);
  curve.estimate = point.tau;
  curve.prob_unhelpful = point.p1;
  curve.prob_helpful = point.p0;
  curve.propensity = propensity::Summarize(e);
  {
    std::vector<domain::CovariateVector> xs;
    std::vector<int> z;
    for (const auto& o : obs) {
      xs.push_back(o.x);
      z.push_back(o.z);
    }
    const propensity::FeatureEncoder enc(xs, schema);
    const Eigen::MatrixXd X = enc.Encode(xs);
    const auto w = propensity::BalancingWeights(e, z, opt.scheme);
    std::vector<std::string> names;
    for (std::size_t c = 1; c < enc.columns().size(); ++c) {
      names.push_back(enc.columns()[c].Name());
    }
    curve.balance =
        propensity::BalanceDiagnostics(X.rightCols(X.cols() - 1), z, w, names);
  }

  const std::size_t reps = static_cast<std::size_t>(std::max(opt.n_boot, 0));
  std::vector<std::vector<double>> boot(reps);
  ParallelFor(reps, opt.threads, [&](std::size_t r) {
    const auto idx = ResampleIndices(obs.size(), opt.seed, r);
    std::vector<SurvivalObservation> sample;
    sample.reserve(idx.size());
    for (auto i : idx) sample.push_back(obs[i]);
    boot[r] = EstimateCurve(sample, grid, schema, opt, 1).tau;
  });

  const std::size_t G = grid.size();
  curve.ci_low.assign(G, 0.0);
  curve.ci_high.assign(G, 0.0);
  curve.boot_se.assign(G, 0.0);
  std::vector<double> column(reps);
  for (std::size_t g = 0; g < G; ++g) {
    if (reps == 0) {
      curve.ci_low[g] = curve.ci_high[g] = curve.estimate[g];
      continue;
    }
    for (std::size_t r = 0; r < reps; ++r) column[r] = boot[r][g];
    const auto ci = PercentileInterval(column, opt.level);
    curve.ci_low[g] = std::min(ci.low, curve.estimate[g]);
    curve.ci_high[g] = std::max(ci.high, curve.estimate[g]);
    curve.boot_se[g] = StdDev(column);
  }
  return curve;
}

std::string RpceCurve::ToCsv() const {
  return NumericCsv({"t", "estimate", "ci_low", "ci_high"},
                    {grid, estimate, ci_low, ci_high});
}

NaiveDifference NaiveKmDifference(std::span<const SurvivalObservation> obs,
                                  const std::vector<double>& grid) {
  std::vector<double> t1, t0;
  std::vector<int> e1, e0;
  for (const auto& o : obs) {
    (o.z == 1 ? t1 : t0).push_back(o.t_obs);
    (o.z == 1 ? e1 : e0).push_back(o.event);
  }
  const KaplanMeier km1(t1, e1), km0(t0, e0);
  NaiveDifference out;
  for (double t : grid) {
    out.estimate.push_back(km0.Survival(t) - km1.Survival(t));
    out.se.push_back(
        std::sqrt(km0.GreenwoodVariance(t) + km1.GreenwoodVariance(t)));
  }
  return out;
}

}  // namespace fbloop::survival
