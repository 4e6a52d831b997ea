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
#include "fbloop/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fbloop/bootstrap.hpp"
#include "fbloop/error.hpp"
#include "fbloop/parallel.hpp"

namespace fbloop::propensity {

namespace {

// log(1 + exp(v)) without overflow.
double Log1pExp(double v) {
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double Sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

void CheckShapes(const Eigen::MatrixXd& X, std::span<const int> z) {
  if (static_cast<std::size_t>(X.rows()) != z.size()) {
    throw ValidationError("logistic: X rows and z length differ");
  }
  if (!X.allFinite()) throw ValidationError("logistic: X has non-finite entries");
  std::size_t ones = 0;
  for (int v : z) {
    if (v != 0 && v != 1) throw ValidationError("logistic: z must be 0/1");
    ones += static_cast<std::size_t>(v);
  }
  if (ones == 0 || ones == z.size()) {
    throw ValidationError("logistic: need at least one unit in each arm");
  }
}

}  // namespace

double PenalizedLogLikelihood(const Eigen::MatrixXd& X, std::span<const int> z,
                              const Eigen::VectorXd& beta, double ridge) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += z[static_cast<std::size_t>(i)] * eta[i] - Log1pExp(eta[i]);
  }
  return ll - 0.5 * ridge * beta.squaredNorm();
}

Eigen::VectorXd Score(const Eigen::MatrixXd& X, std::span<const int> z,
                      const Eigen::VectorXd& beta, double ridge) {
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    resid[i] = z[static_cast<std::size_t>(i)] - Sigmoid(eta[i]);
  }
  return X.transpose() * resid - ridge * beta;
}

LogisticFit FitLogistic(const Eigen::MatrixXd& X, std::span<const int> z,
                        const LogisticOptions& opt) {
  CheckShapes(X, z);
  if (!(opt.ridge >= 0.0)) throw ValidationError("logistic: ridge must be >= 0");
  const Eigen::Index p = X.cols();
  LogisticFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = PenalizedLogLikelihood(X, z, beta, opt.ridge);
  fit.loglik_trace.push_back(ll);
  std::vector<double> score_trace;

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd w(eta.size());
    Eigen::VectorXd resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double mu = Sigmoid(eta[i]);
      w[i] = mu * (1.0 - mu);
      resid[i] = z[static_cast<std::size_t>(i)] - mu;
    }
    const Eigen::VectorXd g = X.transpose() * resid - opt.ridge * beta;
    const double max_score = g.cwiseAbs().maxCoeff();
    score_trace.push_back(max_score);
    fit.iterations = iter;
    fit.max_abs_score = max_score;
    if (max_score < opt.tol) break;

    if (iter >= opt.max_iter) {
      std::ostringstream msg;
      msg << "logistic: no convergence after " << opt.max_iter
          << " iterations; max |score| trace:";
      for (double s : score_trace) msg << ' ' << s;
      throw ComputationError(msg.str());
    }

    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    H.diagonal().array() += opt.ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    Eigen::VectorXd step = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      throw ComputationError(
          "logistic: singular information matrix; collinear covariates or "
          "separation (try ridge > 0)");
    }

    // Step halving keeps the penalized log-likelihood non-decreasing, up to
    // the rounding noise of evaluating it.
    const double slack = 1e-12 * (1.0 + std::abs(ll));
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double ll_new = PenalizedLogLikelihood(X, z, candidate, opt.ridge);
    while (ll_new < ll - slack && scale > 1e-10) {
      scale *= 0.5;
      candidate = beta + scale * step;
      ll_new = PenalizedLogLikelihood(X, z, candidate, opt.ridge);
    }
    if (ll_new < ll - slack) {
      // No ascent possible at floating-point resolution.
      fit.max_abs_score = max_score;
      if (max_score < std::sqrt(opt.tol)) break;
      throw ComputationError("logistic: line search failed");
    }
    beta = candidate;
    ll = std::max(ll, ll_new);
    fit.loglik_trace.push_back(ll);

    if (opt.ridge == 0.0 && beta.cwiseAbs().maxCoeff() > 30.0) {
      throw ComputationError(
          "logistic: coefficients diverge (complete or quasi-complete "
          "separation); refit with ridge > 0");
    }
  }
  fit.coefficients = beta;
  return fit;
}

std::string FeatureColumn::Name() const {
  switch (kind) {
    case Kind::kIntercept:
      return "(intercept)";
    case Kind::kNumeric:
      return field;
    case Kind::kIndicator:
      return field + "=" + level;
  }
  return field;
}

FeatureEncoder::FeatureEncoder(std::span<const domain::CovariateVector> xs,
                               const domain::CovariateSchema& schema) {
  columns_.push_back({FeatureColumn::Kind::kIntercept, "", "", 0.0, 1.0});
  const double n = static_cast<double>(xs.size());
  for (auto name : domain::kNumericCovariates) {
    double mean = 0.0;
    for (const auto& x : xs) mean += domain::NumericCovariate(x, name);
    mean /= n;
    double ss = 0.0;
    for (const auto& x : xs) {
      const double d = domain::NumericCovariate(x, name) - mean;
      ss += d * d;
    }
    const double sd = xs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    if (!(sd > 0.0)) continue;
    columns_.push_back(
        {FeatureColumn::Kind::kNumeric, std::string(name), "", mean, sd});
  }
  for (auto name : domain::kCategoricalCovariates) {
    std::set<std::string> seen;
    for (const auto& x : xs) seen.insert(domain::CategoricalCovariate(x, name));
    std::vector<std::string> present;
    for (const auto& level : domain::SchemaLevels(schema, name)) {
      if (seen.count(level)) present.push_back(level);
    }
    for (std::size_t k = 1; k < present.size(); ++k) {
      columns_.push_back({FeatureColumn::Kind::kIndicator, std::string(name),
                          present[k], 0.0, 1.0});
    }
  }
}

Eigen::RowVectorXd FeatureEncoder::EncodeOne(
    const domain::CovariateVector& x) const {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(columns_.size()));
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& col = columns_[c];
    double v = 1.0;
    switch (col.kind) {
      case FeatureColumn::Kind::kIntercept:
        break;
      case FeatureColumn::Kind::kNumeric:
        v = (domain::NumericCovariate(x, col.field) - col.center) / col.scale;
        break;
      case FeatureColumn::Kind::kIndicator:
        v = domain::CategoricalCovariate(x, col.field) == col.level ? 1.0 : 0.0;
        break;
    }
    row[static_cast<Eigen::Index>(c)] = v;
  }
  return row;
}

Eigen::MatrixXd FeatureEncoder::Encode(
    std::span<const domain::CovariateVector> xs) const {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(xs.size()),
                    static_cast<Eigen::Index>(columns_.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = EncodeOne(xs[i]);
  }
  return X;
}

nlohmann::json FeatureEncoder::ToJson() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : columns_) {
    const char* kind = c.kind == FeatureColumn::Kind::kIntercept ? "intercept"
                       : c.kind == FeatureColumn::Kind::kNumeric ? "numeric"
                                                                 : "indicator";
    arr.push_back({{"kind", kind},
                   {"field", c.field},
                   {"level", c.level},
                   {"center", c.center},
                   {"scale", c.scale}});
  }
  return arr;
}

FeatureEncoder FeatureEncoder::FromJson(const nlohmann::json& j) {
  FeatureEncoder enc;
  for (const auto& e : j) {
    FeatureColumn c;
    const auto kind = e.at("kind").get<std::string>();
    if (kind == "intercept") {
      c.kind = FeatureColumn::Kind::kIntercept;
    } else if (kind == "numeric") {
      c.kind = FeatureColumn::Kind::kNumeric;
    } else if (kind == "indicator") {
      c.kind = FeatureColumn::Kind::kIndicator;
    } else {
      throw ValidationError("encoder: unknown column kind `" + kind + "`");
    }
    c.field = e.at("field").get<std::string>();
    c.level = e.at("level").get<std::string>();
    c.center = e.at("center").get<double>();
    c.scale = e.at("scale").get<double>();
    enc.columns_.push_back(std::move(c));
  }
  return enc;
}

double Clamp(double e) {
  return std::clamp(e, kPropensityFloor, 1.0 - kPropensityFloor);
}

double PropensityModel::Predict(const domain::CovariateVector& x) const {
  return Clamp(Sigmoid(encoder.EncodeOne(x).dot(fit.coefficients)));
}

std::vector<double> PropensityModel::Predict(
    std::span<const domain::CovariateVector> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(Predict(x));
  return out;
}

nlohmann::json PropensityModel::ToJson() const {
  std::vector<double> coef(fit.coefficients.data(),
                           fit.coefficients.data() + fit.coefficients.size());
  return {{"format", "fbloop.propensity.v1"},
          {"encoding", encoder.ToJson()},
          {"coefficients", coef},
          {"iterations", fit.iterations},
          {"max_abs_score", fit.max_abs_score}};
}

PropensityModel PropensityModel::FromJson(const nlohmann::json& j) {
  if (j.value("format", "") != "fbloop.propensity.v1") {
    throw ValidationError("propensity model: unsupported format");
  }
  PropensityModel m;
  m.encoder = FeatureEncoder::FromJson(j.at("encoding"));
  const auto coef = j.at("coefficients").get<std::vector<double>>();
  if (coef.size() != m.encoder.columns().size()) {
    throw ValidationError("propensity model: coefficient count mismatch");
  }
  m.fit.coefficients =
      Eigen::Map<const Eigen::VectorXd>(coef.data(), coef.size());
  m.fit.iterations = j.value("iterations", 0);
  m.fit.max_abs_score = j.value("max_abs_score", 0.0);
  return m;
}

PropensityModel FitPropensity(std::span<const domain::CovariateVector> xs,
                              std::span<const int> z,
                              const domain::CovariateSchema& schema,
                              const LogisticOptions& options) {
  PropensityModel m;
  m.encoder = FeatureEncoder(xs, schema);
  m.fit = FitLogistic(m.encoder.Encode(xs), z, options);
  return m;
}

std::string_view ToString(WeightScheme s) {
  switch (s) {
    case WeightScheme::kIpw:
      return "ipw";
    case WeightScheme::kOverlap:
      return "overlap";
    case WeightScheme::kEntropy:
      return "entropy";
  }
  return "?";
}

WeightScheme ParseWeightScheme(std::string_view name) {
  if (name == "ipw" || name == "IPW") return WeightScheme::kIpw;
  if (name == "overlap" || name == "ow" || name == "OW") {
    return WeightScheme::kOverlap;
  }
  if (name == "entropy") return WeightScheme::kEntropy;
  throw ValidationError("unknown weight scheme `" + std::string(name) + "`");
}

double Tilting(double e, WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::kIpw:
      return 1.0;
    case WeightScheme::kOverlap:
      return e * (1.0 - e);
    case WeightScheme::kEntropy:
      return -e * std::log(e) - (1.0 - e) * std::log1p(-e);
  }
  return 1.0;
}

double BalancingWeight(double e, int z, WeightScheme scheme) {
  if (!(e > 0.0 && e < 1.0)) {
    throw DomainError("balancing weight: propensity must lie in (0, 1)");
  }
  if (z != 0 && z != 1) throw DomainError("balancing weight: z must be 0/1");
  switch (scheme) {
    case WeightScheme::kIpw:
      return z == 1 ? 1.0 / e : 1.0 / (1.0 - e);
    case WeightScheme::kOverlap:
      return z == 1 ? 1.0 - e : e;
    case WeightScheme::kEntropy: {
      const double h = Tilting(e, scheme);
      return z == 1 ? h / e : h / (1.0 - e);
    }
  }
  return 0.0;
}

std::vector<double> BalancingWeights(std::span<const double> e,
                                     std::span<const int> z,
                                     WeightScheme scheme) {
  if (e.size() != z.size()) throw ValidationError("weights: length mismatch");
  std::vector<double> w(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) w[i] = BalancingWeight(e[i], z[i], scheme);
  return w;
}

double Wate(std::span<const double> y, std::span<const int> z,
            std::span<const double> w) {
  if (y.size() != z.size() || y.size() != w.size()) {
    throw ValidationError("wate: length mismatch");
  }
  double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (w[i] < 0.0) throw DomainError("wate: negative weight");
    if (z[i] == 1) {
      num1 += w[i] * y[i];
      den1 += w[i];
    } else {
      num0 += w[i] * y[i];
      den0 += w[i];
    }
  }
  if (!(den1 > 0.0) || !(den0 > 0.0)) {
    throw ComputationError("wate: an arm has zero total weight");
  }
  return num1 / den1 - num0 / den0;
}

std::vector<BalanceRow> BalanceDiagnostics(
    const Eigen::MatrixXd& X, std::span<const int> z,
    std::span<const double> w, const std::vector<std::string>& names) {
  if (static_cast<std::size_t>(X.rows()) != z.size() || z.size() != w.size() ||
      static_cast<std::size_t>(X.cols()) != names.size()) {
    throw ValidationError("balance: shape mismatch");
  }
  std::vector<BalanceRow> rows;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    double m[2] = {0, 0}, n[2] = {0, 0}, wm[2] = {0, 0}, wn[2] = {0, 0};
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const int a = z[static_cast<std::size_t>(i)];
      m[a] += X(i, c);
      n[a] += 1.0;
      wm[a] += w[static_cast<std::size_t>(i)] * X(i, c);
      wn[a] += w[static_cast<std::size_t>(i)];
    }
    double var[2] = {0, 0};
    for (int a = 0; a < 2; ++a) m[a] = n[a] > 0 ? m[a] / n[a] : 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const int a = z[static_cast<std::size_t>(i)];
      var[a] += (X(i, c) - m[a]) * (X(i, c) - m[a]);
    }
    for (int a = 0; a < 2; ++a) var[a] = n[a] > 1 ? var[a] / (n[a] - 1) : 0.0;
    const double sd = std::sqrt((var[0] + var[1]) / 2.0);
    BalanceRow row;
    row.covariate = names[static_cast<std::size_t>(c)];
    if (sd > 0.0) {
      row.smd_raw = (m[1] - m[0]) / sd;
      const double w1 = wn[1] > 0 ? wm[1] / wn[1] : 0.0;
      const double w0 = wn[0] > 0 ? wm[0] / wn[0] : 0.0;
      row.smd_weighted = (w1 - w0) / sd;
    }
    row.flagged = std::abs(row.smd_weighted) > 0.1;
    rows.push_back(std::move(row));
  }
  return rows;
}

PropensitySummary Summarize(std::span<const double> e) {
  PropensitySummary s;
  if (e.empty()) return s;
  std::vector<double> v(e.begin(), e.end());
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  s.q25 = Quantile(v, 0.25);
  s.median = Quantile(v, 0.5);
  s.q75 = Quantile(v, 0.75);
  for (double x : v) {
    if (x <= kPropensityFloor || x >= 1.0 - kPropensityFloor) ++s.n_clamped;
  }
  return s;
}

}  // namespace fbloop::propensity

namespace fbloop::propensity {

AteEstimate WeightedAte(std::span<const domain::CovariateVector> xs,
                        std::span<const int> z, std::span<const double> y,
                        const domain::CovariateSchema& schema,
                        WeightScheme scheme, const AteOptions& options) {
  if (xs.size() != z.size() || z.size() != y.size()) {
    throw ValidationError("ate: length mismatch");
  }
  auto point = [&](std::span<const domain::CovariateVector> bx,
                   std::span<const int> bz, std::span<const double> by) {
    const auto model = FitPropensity(bx, bz, schema, options.logistic);
    const auto e = model.Predict(bx);
    const auto w = BalancingWeights(e, bz, scheme);
    return Wate(by, bz, w);
  };

  AteEstimate out;
  out.estimate = point(xs, z, y);
  for (int v : z) (v == 1 ? out.n_treated : out.n_control)++;

  const std::size_t n = xs.size();
  std::vector<double> reps(static_cast<std::size_t>(std::max(options.n_boot, 0)));
  ParallelFor(reps.size(), options.threads, [&](std::size_t r) {
    const auto idx = ResampleIndices(n, options.seed, r);
    std::vector<domain::CovariateVector> bx;
    std::vector<int> bz;
    std::vector<double> by;
    bx.reserve(n);
    bz.reserve(n);
    by.reserve(n);
    for (auto i : idx) {
      bx.push_back(xs[i]);
      bz.push_back(z[i]);
      by.push_back(y[i]);
    }
    reps[r] = point(bx, bz, by);
  });
  if (!reps.empty()) {
    const auto ci = PercentileInterval(reps, options.level);
    out.ci_low = std::min(ci.low, out.estimate);
    out.ci_high = std::max(ci.high, out.estimate);
    out.boot_se = StdDev(reps);
  } else {
    out.ci_low = out.ci_high = out.estimate;
  }
  return out;
}

std::vector<domain::AnnotatedUnit> UnitsWithFollowup(
    const std::vector<domain::AnnotatedUnit>& units, int k_days) {
  std::vector<domain::AnnotatedUnit> out;
  for (const auto& u : units) {
    if (u.censor_h >= 24.0 * k_days) out.push_back(u);
  }
  return out;
}

double ActiveDaysOutcome(const domain::AnnotatedUnit& unit, int k_days) {
  std::set<long> days;
  for (double dt : unit.followup_h) {
    if (dt > 0.0 && dt <= 24.0 * k_days) {
      days.insert(domain::ActiveDay(unit.t0_h + dt));
    }
  }
  return static_cast<double>(days.size());
}

ActiveDaysResult ActiveDaysAte(const std::vector<domain::AnnotatedUnit>& units,
                               int k_days, WeightScheme scheme,
                               const domain::CovariateSchema& schema,
                               const AteOptions& options) {
  if (k_days <= 0) throw ValidationError("active days: k must be positive");
  const auto used = UnitsWithFollowup(units, k_days);
  ActiveDaysResult res;
  res.k_days = k_days;
  res.scheme = scheme;
  res.n_excluded = static_cast<long>(units.size() - used.size());
  std::vector<domain::CovariateVector> xs;
  std::vector<int> z;
  std::vector<double> y;
  for (const auto& u : used) {
    xs.push_back(u.x);
    z.push_back(u.z);
    y.push_back(ActiveDaysOutcome(u, k_days));
  }
  res.ate = WeightedAte(xs, z, y, schema, scheme, options);

  const auto model = FitPropensity(xs, z, schema, options.logistic);
  const auto e = model.Predict(xs);
  res.propensity = Summarize(e);
  const auto w = BalancingWeights(e, z, scheme);
  const Eigen::MatrixXd X = model.encoder.Encode(xs);
  std::vector<std::string> names;
  for (const auto& c : model.encoder.columns()) names.push_back(c.Name());
  res.balance = BalanceDiagnostics(X.rightCols(X.cols() - 1), z, w,
                                   {names.begin() + 1, names.end()});
  return res;
}

}  // namespace fbloop::propensity
