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

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace fbloop::domain {

// Treatment coding used throughout the toolkit: 1 = the annotated response
// was unhelpful, 0 = helpful.
enum Treatment : int { kHelpful = 0, kUnhelpful = 1 };

struct CovariateVector {
  std::string device_type;
  std::string os_version;
  int token_count = 1;
  double wer = 0.0;
  std::string nlu_domain;
  double nlu_confidence = 1.0;
  int prior_active_days = 0;
  int day_of_week = 0;
  int hour_of_day = 0;

  bool operator==(const CovariateVector&) const = default;
};

struct InteractionRecord {
  std::string user_id;
  double timestamp_h = 0.0;
  std::vector<std::string> tokens;
  std::string domain_label;
  int helpful = kHelpful;  // Z; see Treatment
  // False for follow-up engagements that carry no human label.
  bool annotated = true;
  CovariateVector covariates;

  bool operator==(const InteractionRecord&) const = default;
};

// Declared levels for every categorical field.
struct CovariateSchema {
  std::vector<std::string> device_type;
  std::vector<std::string> os_version;
  std::vector<std::string> nlu_domain;
  std::vector<std::string> domain_label;

  static CovariateSchema Default();
  static CovariateSchema FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;
};

struct RecordError {
  std::size_t index = 0;  // position in the input sequence
  std::string field;
  std::string message;
};

struct ValidationResult {
  std::vector<InteractionRecord> records;  // sorted by (user_id, timestamp_h)
  std::vector<RecordError> errors;

  bool ok() const { return errors.empty(); }
};

// Checks every record invariant against `schema` and returns the log sorted
// by (user_id, timestamp_h). When any record fails, `records` is empty and
// `errors` lists each violation.
ValidationResult ValidateLog(std::vector<InteractionRecord> records,
                             const CovariateSchema& schema);

enum class Cohort { kNew, kExisting };
enum class Subgroup { kRetained, kDropout, kNeither };

std::string_view ToString(Cohort c);
std::string_view ToString(Subgroup s);

struct CohortAssignment {
  std::string user_id;
  Cohort cohort = Cohort::kExisting;
  Subgroup subgroup = Subgroup::kNeither;
};

struct StudyWindow {
  double start_h = 0.0;
  double end_h = 180.0 * 24.0;
  int new_user_quiet_period_days = 60;
  int retained_min_active_months = 3;
  int dropout_max_active_days = 30;
};

// Calendar day index of a timestamp.
inline long ActiveDay(double timestamp_h) {
  return static_cast<long>(timestamp_h / 24.0);
}

// One assignment per user with at least one interaction inside the window,
// in user_id order. `log` must be validated (sorted).
std::vector<CohortAssignment> AssignCohorts(
    const std::vector<InteractionRecord>& log, const StudyWindow& window);

// Records grouped per user. Spans index into the sorted log.
struct UserSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};
std::vector<UserSpan> GroupByUser(const std::vector<InteractionRecord>& log);

// Covariate access by field name. Numeric: token_count, wer,
// nlu_confidence, prior_active_days, day_of_week, hour_of_day. Categorical:
// device_type, os_version, nlu_domain.
inline constexpr std::string_view kNumericCovariates[] = {
    "token_count",       "wer",         "nlu_confidence",
    "prior_active_days", "day_of_week", "hour_of_day"};
inline constexpr std::string_view kCategoricalCovariates[] = {
    "device_type", "os_version", "nlu_domain"};

bool IsNumericCovariate(std::string_view name);
bool IsCategoricalCovariate(std::string_view name);
double NumericCovariate(const CovariateVector& x, std::string_view name);
const std::string& CategoricalCovariate(const CovariateVector& x,
                                        std::string_view name);
const std::vector<std::string>& SchemaLevels(const CovariateSchema& schema,
                                             std::string_view name);

// One annotated interaction per user, with its follow-up engagement
// outcome. time_to_next_h is min(T, C); event = 1 when the next engagement
// was observed before the study end.
struct AnnotatedUnit {
  std::string user_id;
  double t0_h = 0.0;
  int z = 0;
  CovariateVector x;
  double time_to_next_h = 0.0;
  int event = 0;
  double censor_h = 0.0;
  std::vector<double> followup_h;  // engagement times relative to t0, > 0
};

// Uses the first annotated record per user as t0. Users without an
// annotated record, or annotated at/after `study_end_h`, are skipped.
std::vector<AnnotatedUnit> ExtractUnits(
    const std::vector<InteractionRecord>& log, double study_end_h);

// Latest timestamp in the log; the default study end when none is given.
double LastTimestamp(const std::vector<InteractionRecord>& log);

// JSON-lines I/O. Field names follow InteractionRecord.
nlohmann::json ToJson(const InteractionRecord& r);
InteractionRecord RecordFromJson(const nlohmann::json& j);
std::vector<InteractionRecord> ReadJsonLines(const std::string& path);
void WriteJsonLines(const std::vector<InteractionRecord>& log,
                    const std::string& path);
std::string ToJsonLines(const std::vector<InteractionRecord>& log);

}  // namespace fbloop::domain
