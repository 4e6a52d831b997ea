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
// Acceptance suite: one PASS/FAIL line per criterion, each against a time
// budget. Optional arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fbloop/bias.hpp"
#include "fbloop/domain.hpp"
#include "fbloop/lang.hpp"
#include "fbloop/matching.hpp"
#include "fbloop/propensity.hpp"
#include "fbloop/sim.hpp"
#include "fbloop/survival.hpp"

namespace {

using namespace fbloop;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string Fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

// Records a failed check without stopping the criterion.
void Expect(Outcome& o, bool ok, const std::string& what) {
  if (!ok) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + ("failed: " + what);
  }
}

std::vector<survival::SurvivalObservation> Observations(const sim::SimConfig& c) {
  const auto res = sim::SimulateEventLog(c);
  return survival::FromUnits(domain::ExtractUnits(res.log, c.study_end_h()));
}

Outcome WorkedExample() {
  Outcome o;
  const double e = bias::ApproxError(0.6, 0.3);
  const double expected = (0.6 * 0.3 * 0.4) / (1.0 - 0.3 * 0.4);
  Expect(o, std::abs(e - 9.0 / 110.0) <= 1e-16 && e == expected, "epsilon_hat = 9/110");
  const std::string pct = Fmt("%.2f%%", 100 * (0.6 + e));
  Expect(o, pct == "68.18%", "measured satisfaction " + pct);
  o.detail = o.pass ? Fmt("epsilon_hat %.17g, measured ", e) + pct : o.detail;
  return o;
}

Outcome Sweep() {
  Outcome o;
  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(i / 100.0);
  const std::vector<double> s_values = {0.4, 0.5, 0.6, 0.7};
  const auto rows = bias::ErrorSweep(s_values, grid);
  Expect(o, rows.size() == s_values.size() * grid.size(), "row count");
  for (std::size_t a = 0; a < s_values.size(); ++a) {
    const auto* r = &rows[a * grid.size()];
    Expect(o, r[0].epsilon_hat == 0.0, Fmt("zero at delta_p = 0 for s = %.1f", s_values[a]));
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (!(r[i].epsilon_hat > r[i - 1].epsilon_hat)) {
        Expect(o, false, Fmt("strictly increasing for s = %.1f at %.2f", s_values[a], grid[i]));
        break;
      }
    }
  }
  const auto cell = std::find_if(rows.begin(), rows.end(), [](const bias::SweepRow& r) {
    return r.s == 0.6 && r.delta_p == 0.3;
  });
  Expect(o, cell != rows.end() && cell->epsilon_hat == bias::ApproxError(0.6, 0.3),
         "(0.6, 0.3) cell equals the worked example");
  if (o.pass) o.detail = Fmt("%.0f series x %.0f points", s_values.size(), grid.size());
  return o;
}

Outcome PanelMonteCarlo() {
  Outcome o;
  const bias::BiasScenario sc{0.6, 0.7, 0.3, 100000, 30000};
  const double target = sc.s + bias::ExactError(sc);
  double mad = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    mad += std::abs(bias::EstimateSurvey(sim::SimulateSurveyPanel(sc, seed)).s_hat - target);
  }
  mad /= 20;
  Expect(o, mad < 0.005, Fmt("mean |s_hat - target| %.5f < 0.005", mad));
  if (o.pass) o.detail = Fmt("mean |s_hat - (s + epsilon)| = %.5f over 20 seeds", mad);
  return o;
}

Outcome RpceOracle() {
  Outcome o;
  sim::SimConfig c;
  c.n_users = 20000;
  c.s = 0.5;
  c.hazard_unhelpful = 0.04;
  c.hazard_helpful = 0.08;
  c.seed = 2024;
  c.record_followups = false;
  const auto obs = Observations(c);
  const auto grid = sim::DefaultGrid();
  survival::RpceOptions opt;
  opt.n_boot = 200;
  opt.seed = 7;
  const auto curve =
      survival::RpcePipeline(obs, grid, domain::CovariateSchema::Default(), opt);
  double max_dev = 0.0, at24 = NAN;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    max_dev = std::max(max_dev, std::abs(curve.estimate[g] - sim::ExponentialEffect(0.04, 0.08, grid[g])));
    if (grid[g] == 24.0) at24 = curve.estimate[g];
  }
  Expect(o, std::abs(at24 - -0.2363) <= 0.015, Fmt("estimate at 24h %.4f in -0.2363 +- 0.015", at24));
  Expect(o, max_dev < 0.02, Fmt("max grid deviation %.4f < 0.02", max_dev));
  if (o.pass) {
    o.detail = Fmt("estimate(24h) %.4f, max deviation %.4f over %.0f grid points", at24, max_dev,
                   grid.size());
  }
  return o;
}

Outcome Deconfounding() {
  Outcome o;
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    sim::SimConfig c;
    c.n_users = 6000;
    c.s = 0.5;
    c.hazard_unhelpful = 0.04;
    c.hazard_helpful = 0.06;
    c.confounders = {{"prior_active_days", 1.0, 0.6}};
    c.truth_grid = {24.0};
    c.seed = 100 + seed;
    c.record_followups = false;
    const auto res = sim::SimulateEventLog(c);
    const auto obs = survival::FromUnits(domain::ExtractUnits(res.log, c.study_end_h()));
    const double truth = res.truth.effect_overlap[0];
    const auto naive = survival::NaiveKmDifference(obs, {24.0});
    survival::RpceOptions opt;
    opt.n_boot = 100;
    opt.seed = seed;
    const auto ow = survival::RpcePipeline(obs, {24.0}, domain::CovariateSchema::Default(), opt);
    const bool naive_off = std::abs(naive.estimate[0] - truth) > 3 * naive.se[0];
    const bool ow_on = std::abs(ow.estimate[0] - truth) <= 2 * ow.boot_se[0];
    good += naive_off && ow_on;
  }
  Expect(o, good >= 8, Fmt("%.0f of 10 seeds separate naive from overlap-weighted", good));
  if (o.pass) o.detail = Fmt("%.0f of 10 seeds: naive > 3 SE off, overlap within 2 SE", good);
  return o;
}

Outcome NullCoverage() {
  Outcome o;
  const std::vector<double> grid = {6, 12, 24, 48, 96, 168};
  long covered = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    sim::SimConfig c;
    c.n_users = 1500;
    c.s = 0.5;
    c.hazard_unhelpful = 0.05;
    c.hazard_helpful = 0.05;
    c.seed = 500 + seed;
    c.record_followups = false;
    survival::RpceOptions opt;
    opt.n_boot = 200;
    opt.seed = seed;
    const auto curve =
        survival::RpcePipeline(Observations(c), grid, domain::CovariateSchema::Default(), opt);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      covered += curve.ci_low[g] <= 0.0 && 0.0 <= curve.ci_high[g];
      ++total;
    }
  }
  const double rate = static_cast<double>(covered) / total;
  Expect(o, rate >= 0.90, Fmt("coverage %.3f >= 0.90", rate));
  if (o.pass) o.detail = Fmt("95%% CIs cover 0 at %.1f%% of %.0f seed-grid points", 100 * rate, total);
  return o;
}

Outcome SurvivalFixtures() {
  Outcome o;
  const std::vector<double> t = {2, 3, 5, 7};
  const std::vector<int> ev = {0, 1, 0, 1};
  Expect(o, survival::KaplanMeier(t, ev).Survival(4.0) == 2.0 / 3.0, "KM(4) == 2/3");

  std::mt19937_64 gen(5);
  std::exponential_distribution<double> expo(0.1);
  std::vector<double> times(200);
  for (auto& x : times) x = 1.0 + std::round(expo(gen));  // ties included
  const std::vector<int> events(times.size(), 1);
  const survival::PseudoObservations po(times, events);
  const survival::KaplanMeier km(times, events);
  std::vector<double> col(times.size());
  for (double g : {1.0, 2.0, 5.5, 10.0, 17.0, 40.0}) {
    po.Column(g, col);
    double sum = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (col[i] != (times[i] >= g ? 1.0 : 0.0)) {
        Expect(o, false, Fmt("indicator at t = %.1f, unit %.0f", g, i));
        break;
      }
      sum += col[i];
    }
    Expect(o, std::abs(sum / times.size() - km.Survival(g)) <= 1e-12, Fmt("mean = KM at %.1f", g));
  }
  if (o.pass) o.detail = "KM(4) = 2/3; uncensored pseudo-observations are indicators";
  return o;
}

Outcome WeightIdentities() {
  using propensity::WeightScheme;
  Outcome o;
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(1e-9, 1.0 - 1e-9);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double e = u(gen);
    for (int z : {0, 1}) {
      const double ipw = propensity::BalancingWeight(e, z, WeightScheme::kIpw);
      const double ow = propensity::BalancingWeight(e, z, WeightScheme::kOverlap);
      const double ent = propensity::BalancingWeight(e, z, WeightScheme::kEntropy);
      const double ipw_ref = z ? 1.0 / e : 1.0 / (1.0 - e);
      const double ow_ref = z ? 1.0 - e : e;
      const double h = -(e * std::log(e) + (1 - e) * std::log(1 - e));
      worst = std::max({worst, std::abs(ipw - ipw_ref) / ipw_ref, std::abs(ow - ow_ref),
                        std::abs(ow - e * (1 - e) * ipw), std::abs(ent - h * ipw_ref) / ipw_ref,
                        std::abs(ent - propensity::BalancingWeight(1 - e, 1 - z,
                                                                   WeightScheme::kEntropy)) /
                            std::max(1.0, ent)});
    }
  }
  Expect(o, worst <= 1e-12, Fmt("identity residual %.3g <= 1e-12", worst));

  std::uniform_real_distribution<double> y_dist(0.0, 5.0);
  std::vector<double> y, e(40, 0.37);
  std::vector<int> z;
  double sum[2] = {0, 0}, n[2] = {0, 0};
  for (int i = 0; i < 40; ++i) {
    z.push_back(i % 3 == 0);
    y.push_back(y_dist(gen));
    sum[z.back()] += y.back();
    n[z.back()] += 1;
  }
  const double dim = sum[1] / n[1] - sum[0] / n[0];
  for (auto s : {WeightScheme::kIpw, WeightScheme::kOverlap, WeightScheme::kEntropy}) {
    const double w = propensity::Wate(y, z, propensity::BalancingWeights(e, z, s));
    Expect(o, std::abs(w - dim) <= 1e-12, std::string(propensity::ToString(s)) + " WATE = DIM");
  }
  if (o.pass) o.detail = Fmt("max identity residual %.2g; constant-e WATE = difference in means", worst);
  return o;
}

Outcome Irls() {
  Outcome o;
  std::mt19937_64 gen(1);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> u;
  const int n = 50000;
  const double b0 = -0.4, b1 = 1.0, b2 = -0.6;
  Eigen::MatrixXd X(n, 3);
  std::vector<int> z(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = normal(gen);
    X(i, 2) = normal(gen);
    const double eta = b0 + b1 * X(i, 1) + b2 * X(i, 2);
    z[i] = u(gen) < 1.0 / (1.0 + std::exp(-eta));
  }
  const auto fit = propensity::FitLogistic(X, z);
  const double err = std::max({std::abs(fit.coefficients[0] - b0), std::abs(fit.coefficients[1] - b1),
                               std::abs(fit.coefficients[2] - b2)});
  Expect(o, err <= 0.05, Fmt("max coefficient error %.4f <= 0.05", err));

  Eigen::MatrixXd F(10, 3);
  const std::vector<int> zf = {1, 0, 0, 1, 1, 0, 1, 0, 0, 1};
  for (int i = 0; i < 10; ++i) {
    F(i, 0) = 1.0;
    F(i, 1) = normal(gen);
    F(i, 2) = normal(gen);
  }
  Eigen::VectorXd beta(3);
  beta << 0.3, -0.7, 1.1;
  const Eigen::VectorXd g = propensity::Score(F, zf, beta, 0.1);
  double worst = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double h = 1e-5;
    Eigen::VectorXd up = beta, down = beta;
    up[k] += h;
    down[k] -= h;
    const double fd = (propensity::PenalizedLogLikelihood(F, zf, up, 0.1) -
                       propensity::PenalizedLogLikelihood(F, zf, down, 0.1)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g[k]) / std::max(1.0, std::abs(g[k])));
  }
  Expect(o, worst <= 1e-6, Fmt("gradient relative error %.3g <= 1e-6", worst));
  if (o.pass) o.detail = Fmt("coefficient error %.4f; gradient relative error %.2g", err, worst);
  return o;
}

Outcome Cem() {
  Outcome o;
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> conf(0, 4);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> noise;
  std::vector<matching::StratumKey> keys;
  std::vector<int> z;
  std::vector<double> y;
  for (int i = 0; i < 10000; ++i) {
    const int c = conf(gen);
    z.push_back(u(gen) < 0.15 + 0.17 * c);
    keys.push_back(std::to_string(c));
    y.push_back(1.5 * c + 2.0 * z.back() + noise(gen));
  }
  matching::CemOptions opt;
  opt.n_boot = 200;
  opt.seed = 3;
  const auto est = matching::EstimateCemAte(y, z, keys, opt);
  Expect(o, std::abs(est.estimate - 2.0) <= 0.1, Fmt("tau %.4f in 2.0 +- 0.1", est.estimate));

  const auto hand = matching::CemMatch({"s1", "s1", "s1", "s1", "s1", "s1", "s2", "s2"},
                                       std::vector<int>{1, 1, 0, 0, 0, 0, 1, 0});
  const std::vector<double> expected = {1, 1, 2.0 / 4 * 5.0 / 3, 2.0 / 4 * 5.0 / 3,
                                        2.0 / 4 * 5.0 / 3, 2.0 / 4 * 5.0 / 3, 1, 5.0 / 3};
  Expect(o, hand.weights == expected, "hand-computed weights");

  const auto m = matching::CemMatch(keys, z);
  std::vector<double> ym, wm;
  std::vector<int> zm;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (m.weights[i] == 0.0) continue;
    ym.push_back(y[i]);
    zm.push_back(z[i]);
    wm.push_back(m.weights[i]);
  }
  const double gap = std::abs(matching::CemDifference(y, z, m) - propensity::Wate(ym, zm, wm));
  Expect(o, gap <= 1e-12, Fmt("cem vs wate gap %.3g <= 1e-12", gap));
  if (o.pass) o.detail = Fmt("tau %.4f, CI [%.3f, %.3f]", est.estimate, est.ci_low, est.ci_high);
  return o;
}

Outcome ActiveDays() {
  using propensity::WeightScheme;
  Outcome o;
  sim::SimConfig c;
  c.n_users = 4000;
  c.s = 0.5;
  c.hazard_helpful = 0.08;
  c.hazard_unhelpful = 0.04;
  c.seed = 31;
  c.record_followups = true;
  const auto res = sim::SimulateEventLog(c);
  const auto units = domain::ExtractUnits(res.log, c.study_end_h());
  const auto schema = domain::CovariateSchema::Default();
  propensity::AteOptions opt;
  opt.n_boot = 200;
  opt.seed = 4;
  std::string summary;
  for (auto s : {WeightScheme::kIpw, WeightScheme::kOverlap, WeightScheme::kEntropy}) {
    const auto r = propensity::ActiveDaysAte(units, 3, s, schema, opt);
    const std::string name(propensity::ToString(s));
    Expect(o, r.ate.estimate < 0 && r.ate.ci_high < 0,
           name + Fmt(" %.3f [%.3f, %.3f] negative, CI below 0", r.ate.estimate, r.ate.ci_low,
                      r.ate.ci_high));
    summary += name + Fmt(" %.3f, ", r.ate.estimate);
  }
  const auto kept = propensity::UnitsWithFollowup(units, 3);
  std::vector<domain::CovariateVector> xs;
  std::vector<int> z;
  std::vector<double> y;
  for (const auto& u : kept) {
    xs.push_back(u.x);
    z.push_back(u.z);
    y.push_back(propensity::ActiveDaysOutcome(u, 3));
  }
  const auto spec = matching::DefaultCoarsening(xs, matching::DefaultCemCovariates());
  std::vector<matching::StratumKey> keys;
  for (const auto& x : xs) keys.push_back(matching::Coarsen(x, spec).key);
  matching::CemOptions copt;
  copt.n_boot = 200;
  copt.seed = 4;
  const auto cem = matching::EstimateCemAte(y, z, keys, copt);
  Expect(o, cem.estimate < 0 && cem.ci_high < 0,
         Fmt("cem %.3f [%.3f, %.3f] negative, CI below 0", cem.estimate, cem.ci_low, cem.ci_high));
  if (o.pass) o.detail = "3-day active days: " + summary + Fmt("cem %.3f; all CIs below 0", cem.estimate);
  return o;
}

Outcome Language() {
  Outcome o;
  const lang::ContingencyTable2x2 t{1245, 11592, 308, 839};
  const auto r = lang::ChiSquared2x2(t);
  // Expected counts from the margins.
  const double n = 1245.0 + 11592 + 308 + 839;
  const double rows[2] = {1245.0 + 11592, 308.0 + 839}, cols[2] = {1245.0 + 308, 11592.0 + 839};
  const double obs[2][2] = {{1245, 11592}, {308, 839}};
  double stat = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double e = rows[i] * cols[j] / n;
      stat += (obs[i][j] - e) * (obs[i][j] - e) / e;
    }
  }
  Expect(o, std::abs(r.statistic - stat) <= 1e-9 * stat, Fmt("statistic %.10g vs %.10g", r.statistic, stat));
  Expect(o, r.p_value < 1e-4, Fmt("p %.3g < 1e-4", r.p_value));
  const std::string hi = Fmt("%.1f%%", 100 * t.UnhelpfulRateHigh());
  const std::string lo = Fmt("%.1f%%", 100 * t.UnhelpfulRateLow());
  const double ratio = t.UnhelpfulRateHigh() / t.UnhelpfulRateLow();
  Expect(o, hi == "19.8%" && lo == "6.7%", "rates " + hi + " / " + lo);
  Expect(o, std::abs(ratio - 2.94) < 0.005, Fmt("ratio %.3f ~ 2.94", ratio));

  auto lm = lang::TrigramLm::Train({lang::Tokenize("a")}, 0.0, 0.0);
  Expect(o, lm.Perplexity(lang::Tokenize("a")) == 1.0, "deterministic PP == 1");
  const std::vector<lang::Sentence> same(3, lang::Tokenize("turn on the light"));
  Expect(o, lang::JaccardDiversity(same) == 0.0, "identical Jaccard 0");
  Expect(o, std::abs(lang::SelfBleuDiversity(same)) <= 1e-15, "identical selfBLEU 0");
  const std::vector<lang::Sentence> disjoint = {lang::Tokenize("a b"), lang::Tokenize("c d"),
                                                lang::Tokenize("e f")};
  Expect(o, lang::JaccardDiversity(disjoint) == 1.0, "disjoint Jaccard 1");
  if (o.pass) {
    o.detail = Fmt("chi2 %.6f, p %.3g, ", r.statistic, r.p_value) + "rates " + hi + " / " + lo +
               Fmt(" (ratio %.3f)", ratio);
  }
  return o;
}

// Template utterances. New users swap in rare words with a probability
// that decays over time since the cohort origin.
Outcome CohortTrend() {
  Outcome o;
  const std::vector<std::string> artists = {"queen", "abba", "adele", "drake", "bach", "muse"};
  const std::vector<std::string> cities = {"paris", "tokyo", "lima", "oslo", "cairo", "rome"};
  const std::vector<std::string> numbers = {"five", "ten", "twenty", "thirty"};
  std::vector<std::string> rare;
  for (int i = 0; i < 60; ++i) rare.push_back("rare" + std::to_string(i));

  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> u;
  auto pick = [&](const std::vector<std::string>& v) { return v[gen() % v.size()]; };
  auto utterance = [&](double rare_prob) {
    const double r = u(gen);
    const std::string slot_rare = u(gen) < rare_prob ? pick(rare) : "";
    if (r < 1.0 / 3) return "play " + (slot_rare.empty() ? pick(artists) : slot_rare) + " music";
    if (r < 2.0 / 3) return "what is the weather in " + (slot_rare.empty() ? pick(cities) : slot_rare);
    return "set a timer for " + (slot_rare.empty() ? pick(numbers) : slot_rare) + " minutes";
  };

  std::vector<lang::Sentence> corpus;
  for (int i = 0; i < 3000; ++i) corpus.push_back(lang::Tokenize(utterance(0.0)));
  for (const auto& w : rare) corpus.push_back({w});
  const auto lm = lang::TrigramLm::Train(corpus);

  const double day = 24.0, origin = 60 * day, end = 179 * day;
  std::vector<domain::InteractionRecord> records;
  auto add = [&](const std::string& user, double t, const std::string& text) {
    domain::InteractionRecord r;
    r.user_id = user;
    r.timestamp_h = t;
    r.tokens = lang::Tokenize(text);
    r.domain_label = "music";
    r.annotated = false;
    r.covariates = {"phone", "v1", 3, 0.1, "music", 0.9, 3, 2, 14};
    records.push_back(std::move(r));
  };
  for (int k = 0; k < 300; ++k) {
    for (int d = 0; d < 179; ++d) add("e" + std::to_string(k), d * day + 24 * u(gen), utterance(0.0));
    const double start = origin + 3 * day * u(gen);
    for (double t = start; t < end; t += day) {
      const double q = 0.8 * std::exp(-(t - origin) / (20 * day));
      add("n" + std::to_string(k), t, utterance(q));
    }
  }
  auto valid = domain::ValidateLog(std::move(records), domain::CovariateSchema::Default());
  Expect(o, valid.ok(), "synthetic log validates");
  domain::StudyWindow window;
  window.end_h = end;
  const auto cohorts = domain::AssignCohorts(valid.records, window);
  const auto trend = lang::CohortPpTrend(valid.records, cohorts, lm, 7, origin, end);
  const auto& nw = trend.series.at("new");
  const auto& ex = trend.series.at("existing");
  const bool complete = !nw.empty() && nw.front() && ex.front() && nw.back() && ex.back();
  Expect(o, complete, "first and final windows populated");
  if (!complete) return o;
  const double first = *nw.front() / *ex.front() - 1.0;
  const double last = *nw.back() / *ex.back() - 1.0;
  Expect(o, first >= 0.20, Fmt("first window new/existing - 1 = %.3f >= 0.20", first));
  Expect(o, std::abs(last) <= 0.05, Fmt("final window |new/existing - 1| = %.3f <= 0.05", last));
  if (o.pass) {
    o.detail = Fmt("new vs existing PP: %+.1f%% first window, %+.1f%% final window (%.0f windows)",
                   100 * first, 100 * last, nw.size());
  }
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "survey error worked example", 0.001, WorkedExample},
      {2, "error sweep", 1, Sweep},
      {3, "survey panel Monte Carlo", 10, PanelMonteCarlo},
      {4, "RPCE exponential oracle", 60, RpceOracle},
      {5, "deconfounding", 120, Deconfounding},
      {6, "null coverage", 300, NullCoverage},
      {7, "survival fixtures", 0.001, SurvivalFixtures},
      {8, "weight identities", 1, WeightIdentities},
      {9, "IRLS", 10, Irls},
      {10, "CEM", 5, Cem},
      {11, "active-days direction", 60, ActiveDays},
      {12, "language statistics", 1, Language},
      {13, "cohort perplexity trend", 30, CohortTrend},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      out.pass = false;
      out.detail += std::string(out.detail.empty() ? "" : "; ") + "over budget";
    }
    failed += !out.pass;
    std::printf("criterion %2d %-30s %s  %.3fs / %gs  %s\n", c.id, c.name, out.pass ? "PASS" : "FAIL",
                secs, c.budget_s, out.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
