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
#include "fbloop/domain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fbloop/error.hpp"

namespace fbloop::domain {

namespace {

bool Contains(const std::vector<std::string>& levels, const std::string& v) {
  return std::find(levels.begin(), levels.end(), v) != levels.end();
}

std::vector<std::string> Levels(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) {
    throw ValidationError(std::string("schema: missing field `") + key + "`");
  }
  auto levels = j.at(key).get<std::vector<std::string>>();
  if (levels.empty()) {
    throw ValidationError(std::string("schema: `") + key +
                          "` needs at least one level");
  }
  std::set<std::string> unique(levels.begin(), levels.end());
  if (unique.size() != levels.size()) {
    throw ValidationError(std::string("schema: `") + key +
                          "` has duplicate levels");
  }
  return levels;
}

template <typename T>
T Field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) {
    throw ValidationError(std::string("missing field `") + key + "`");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("field `") + key + "` has wrong type");
  }
}

}  // namespace

CovariateSchema CovariateSchema::Default() {
  CovariateSchema s;
  s.device_type = {"phone", "speaker", "watch"};
  s.os_version = {"v1", "v2", "v3"};
  s.nlu_domain = {"weather", "music", "phone", "timer", "knowledge"};
  s.domain_label = s.nlu_domain;
  return s;
}

CovariateSchema CovariateSchema::FromJson(const nlohmann::json& j) {
  CovariateSchema s;
  s.device_type = Levels(j, "device_type");
  s.os_version = Levels(j, "os_version");
  s.nlu_domain = Levels(j, "nlu_domain");
  s.domain_label = Levels(j, "domain_label");
  return s;
}

nlohmann::json CovariateSchema::ToJson() const {
  return {{"device_type", device_type},
          {"os_version", os_version},
          {"nlu_domain", nlu_domain},
          {"domain_label", domain_label}};
}

ValidationResult ValidateLog(std::vector<InteractionRecord> records,
                             const CovariateSchema& schema) {
  ValidationResult out;
  auto fail = [&](std::size_t i, const char* field, std::string msg) {
    out.errors.push_back({i, field, std::move(msg)});
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& x = r.covariates;
    if (r.user_id.empty()) fail(i, "user_id", "empty user id");
    if (!std::isfinite(r.timestamp_h) || r.timestamp_h < 0.0) {
      fail(i, "timestamp_h", "must be finite and >= 0");
    }
    if (r.tokens.empty()) fail(i, "tokens", "token sequence is empty");
    if (!Contains(schema.domain_label, r.domain_label)) {
      fail(i, "domain_label", "level `" + r.domain_label + "` not in schema");
    }
    if (r.helpful != 0 && r.helpful != 1) fail(i, "helpful", "must be 0 or 1");
    if (!Contains(schema.device_type, x.device_type)) {
      fail(i, "device_type", "level `" + x.device_type + "` not in schema");
    }
    if (!Contains(schema.os_version, x.os_version)) {
      fail(i, "os_version", "level `" + x.os_version + "` not in schema");
    }
    if (!Contains(schema.nlu_domain, x.nlu_domain)) {
      fail(i, "nlu_domain", "level `" + x.nlu_domain + "` not in schema");
    }
    if (x.token_count < 1) fail(i, "token_count", "must be >= 1");
    if (!(x.wer >= 0.0 && x.wer <= 1.0)) fail(i, "wer", "must be in [0, 1]");
    if (!(x.nlu_confidence >= 0.0 && x.nlu_confidence <= 1.0)) {
      fail(i, "nlu_confidence", "must be in [0, 1]");
    }
    if (x.prior_active_days < 0) fail(i, "prior_active_days", "must be >= 0");
    if (x.day_of_week < 0 || x.day_of_week > 6) {
      fail(i, "day_of_week", "must be in 0..6");
    }
    if (x.hour_of_day < 0 || x.hour_of_day > 23) {
      fail(i, "hour_of_day", "must be in 0..23");
    }
  }
  if (!out.errors.empty()) return out;

  std::stable_sort(records.begin(), records.end(),
                   [](const InteractionRecord& a, const InteractionRecord& b) {
                     if (a.user_id != b.user_id) return a.user_id < b.user_id;
                     return a.timestamp_h < b.timestamp_h;
                   });
  out.records = std::move(records);
  return out;
}

std::string_view ToString(Cohort c) {
  return c == Cohort::kNew ? "new" : "existing";
}

std::string_view ToString(Subgroup s) {
  switch (s) {
    case Subgroup::kRetained:
      return "retained";
    case Subgroup::kDropout:
      return "dropout";
    case Subgroup::kNeither:
      break;
  }
  return "neither";
}

std::vector<UserSpan> GroupByUser(const std::vector<InteractionRecord>& log) {
  std::vector<UserSpan> spans;
  std::size_t i = 0;
  while (i < log.size()) {
    std::size_t j = i + 1;
    while (j < log.size() && log[j].user_id == log[i].user_id) ++j;
    spans.push_back({i, j});
    i = j;
  }
  return spans;
}

std::vector<CohortAssignment> AssignCohorts(
    const std::vector<InteractionRecord>& log, const StudyWindow& window) {
  if (!(window.start_h < window.end_h)) {
    throw ValidationError("study window: start_h must be < end_h");
  }
  if (window.new_user_quiet_period_days <= 0 ||
      window.retained_min_active_months <= 0 ||
      window.dropout_max_active_days <= 0) {
    throw ValidationError("study window: thresholds must be positive");
  }
  const double quiet_end =
      window.start_h + 24.0 * window.new_user_quiet_period_days;
  if (quiet_end >= window.end_h) {
    throw ValidationError(
        "study window is not longer than the new-user quiet period");
  }
  constexpr double kMonthH = 30.0 * 24.0;

  std::vector<CohortAssignment> out;
  for (const auto& span : GroupByUser(log)) {
    bool any_in_window = false;
    bool active_in_quiet = false;
    std::set<long> active_days;
    std::set<long> active_months;
    for (std::size_t i = span.begin; i < span.end; ++i) {
      const double t = log[i].timestamp_h;
      if (t < window.start_h || t >= window.end_h) continue;
      any_in_window = true;
      active_days.insert(ActiveDay(t));
      if (t < quiet_end) {
        active_in_quiet = true;
      } else {
        active_months.insert(static_cast<long>((t - quiet_end) / kMonthH));
      }
    }
    if (!any_in_window) continue;

    CohortAssignment a;
    a.user_id = log[span.begin].user_id;
    if (active_in_quiet) {
      a.cohort = Cohort::kExisting;
    } else {
      a.cohort = Cohort::kNew;
      if (static_cast<int>(active_months.size()) >=
          window.retained_min_active_months) {
        a.subgroup = Subgroup::kRetained;
      } else if (static_cast<int>(active_days.size()) <=
                 window.dropout_max_active_days) {
        a.subgroup = Subgroup::kDropout;
      }
    }
    out.push_back(std::move(a));
  }
  return out;
}

bool IsNumericCovariate(std::string_view name) {
  return std::find(std::begin(kNumericCovariates), std::end(kNumericCovariates),
                   name) != std::end(kNumericCovariates);
}

bool IsCategoricalCovariate(std::string_view name) {
  return std::find(std::begin(kCategoricalCovariates),
                   std::end(kCategoricalCovariates),
                   name) != std::end(kCategoricalCovariates);
}

double NumericCovariate(const CovariateVector& x, std::string_view name) {
  if (name == "token_count") return x.token_count;
  if (name == "wer") return x.wer;
  if (name == "nlu_confidence") return x.nlu_confidence;
  if (name == "prior_active_days") return x.prior_active_days;
  if (name == "day_of_week") return x.day_of_week;
  if (name == "hour_of_day") return x.hour_of_day;
  throw ValidationError("unknown numeric covariate `" + std::string(name) + "`");
}

const std::string& CategoricalCovariate(const CovariateVector& x,
                                        std::string_view name) {
  if (name == "device_type") return x.device_type;
  if (name == "os_version") return x.os_version;
  if (name == "nlu_domain") return x.nlu_domain;
  throw ValidationError("unknown categorical covariate `" + std::string(name) +
                        "`");
}

const std::vector<std::string>& SchemaLevels(const CovariateSchema& schema,
                                             std::string_view name) {
  if (name == "device_type") return schema.device_type;
  if (name == "os_version") return schema.os_version;
  if (name == "nlu_domain") return schema.nlu_domain;
  if (name == "domain_label") return schema.domain_label;
  throw ValidationError("unknown categorical field `" + std::string(name) + "`");
}

std::vector<AnnotatedUnit> ExtractUnits(
    const std::vector<InteractionRecord>& log, double study_end_h) {
  std::vector<AnnotatedUnit> units;
  for (const auto& span : GroupByUser(log)) {
    std::size_t a = span.end;
    for (std::size_t i = span.begin; i < span.end; ++i) {
      if (log[i].annotated) {
        a = i;
        break;
      }
    }
    if (a == span.end) continue;
    const auto& r = log[a];
    if (r.timestamp_h >= study_end_h) continue;
    AnnotatedUnit u;
    u.user_id = r.user_id;
    u.t0_h = r.timestamp_h;
    u.z = r.helpful;
    u.x = r.covariates;
    u.censor_h = study_end_h - r.timestamp_h;
    for (std::size_t i = a + 1; i < span.end; ++i) {
      const double dt = log[i].timestamp_h - r.timestamp_h;
      if (dt > 0.0 && log[i].timestamp_h <= study_end_h) u.followup_h.push_back(dt);
    }
    if (u.followup_h.empty()) {
      u.time_to_next_h = u.censor_h;
      u.event = 0;
    } else {
      u.time_to_next_h = u.followup_h.front();
      u.event = 1;
    }
    units.push_back(std::move(u));
  }
  return units;
}

double LastTimestamp(const std::vector<InteractionRecord>& log) {
  double last = 0.0;
  for (const auto& r : log) last = std::max(last, r.timestamp_h);
  return last;
}

nlohmann::json ToJson(const InteractionRecord& r) {
  const auto& x = r.covariates;
  nlohmann::json cov = {{"device_type", x.device_type},
                        {"os_version", x.os_version},
                        {"token_count", x.token_count},
                        {"wer", x.wer},
                        {"nlu_domain", x.nlu_domain},
                        {"nlu_confidence", x.nlu_confidence},
                        {"prior_active_days", x.prior_active_days},
                        {"day_of_week", x.day_of_week},
                        {"hour_of_day", x.hour_of_day}};
  return {{"user_id", r.user_id},
          {"timestamp_h", r.timestamp_h},
          {"tokens", r.tokens},
          {"domain_label", r.domain_label},
          {"helpful", r.helpful},
          {"annotated", r.annotated},
          {"covariates", std::move(cov)}};
}

InteractionRecord RecordFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  InteractionRecord r;
  r.user_id = Field<std::string>(j, "user_id");
  r.timestamp_h = Field<double>(j, "timestamp_h");
  r.tokens = Field<std::vector<std::string>>(j, "tokens");
  r.domain_label = Field<std::string>(j, "domain_label");
  r.helpful = Field<int>(j, "helpful");
  r.annotated = j.contains("annotated") ? Field<bool>(j, "annotated") : true;
  const auto cov = Field<nlohmann::json>(j, "covariates");
  auto& x = r.covariates;
  x.device_type = Field<std::string>(cov, "device_type");
  x.os_version = Field<std::string>(cov, "os_version");
  x.token_count = Field<int>(cov, "token_count");
  x.wer = Field<double>(cov, "wer");
  x.nlu_domain = Field<std::string>(cov, "nlu_domain");
  x.nlu_confidence = Field<double>(cov, "nlu_confidence");
  x.prior_active_days = Field<int>(cov, "prior_active_days");
  x.day_of_week = Field<int>(cov, "day_of_week");
  x.hour_of_day = Field<int>(cov, "hour_of_day");
  return r;
}

std::vector<InteractionRecord> ReadJsonLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<InteractionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(RecordFromJson(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " +
                            e.what());
    } catch (const Error& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " +
                            e.what());
    }
  }
  return out;
}

std::string ToJsonLines(const std::vector<InteractionRecord>& log) {
  std::string out;
  for (const auto& r : log) {
    out += ToJson(r).dump();
    out += '\n';
  }
  return out;
}

void WriteJsonLines(const std::vector<InteractionRecord>& log,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << ToJsonLines(log);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace fbloop::domain
