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
/* C interface to the fbloop library. All functions report failures through a
 * status code; the message for the most recent failure on the calling thread
 * is available from fbloop_last_error(). Strings returned through char** out
 * parameters are heap allocated and must be released with fbloop_free(). */
#ifndef FBLOOP_FBLOOP_H_
#define FBLOOP_FBLOOP_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FBLOOP_API __declspec(dllexport)
#else
#define FBLOOP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fbloop_status {
  FBLOOP_OK = 0,
  FBLOOP_ERR_VALIDATION = 1,
  FBLOOP_ERR_DOMAIN = 2,
  FBLOOP_ERR_COMPUTATION = 3,
  FBLOOP_ERR_IO = 4,
  FBLOOP_ERR_INTERNAL = 5
} fbloop_status;

typedef struct fbloop_log fbloop_log;
typedef struct fbloop_lm fbloop_lm;

FBLOOP_API const char* fbloop_version(void);
FBLOOP_API const char* fbloop_last_error(void);
FBLOOP_API void fbloop_free(void* p);

/* Event logs. schema_json may be NULL for the default covariate schema. */
FBLOOP_API fbloop_status fbloop_log_read(const char* path,
                                         const char* schema_json,
                                         fbloop_log** out);
FBLOOP_API fbloop_status fbloop_log_simulate(const char* config_json,
                                             fbloop_log** out,
                                             char** truth_json);
FBLOOP_API fbloop_status fbloop_log_to_jsonl(const fbloop_log* log,
                                             char** out);
FBLOOP_API size_t fbloop_log_size(const fbloop_log* log);
FBLOOP_API double fbloop_log_last_timestamp(const fbloop_log* log);
FBLOOP_API void fbloop_log_free(fbloop_log* log);

/* Estimators. options_json carries method settings (scheme, grid, k_days,
 * n_boot, level, seed, threads, study_end_h). Outputs a CSV table and a JSON
 * diagnostics document. */
FBLOOP_API fbloop_status fbloop_estimate_rpce(const fbloop_log* log,
                                              const char* options_json,
                                              char** csv, char** diagnostics);
FBLOOP_API fbloop_status fbloop_estimate_active_days(const fbloop_log* log,
                                                     const char* options_json,
                                                     char** csv,
                                                     char** diagnostics);
FBLOOP_API fbloop_status fbloop_estimate_cem(const fbloop_log* log,
                                             const char* options_json,
                                             char** csv, char** diagnostics);

/* Survey measurement error. */
FBLOOP_API fbloop_status fbloop_bias_exact(double s, double p, double delta_p,
                                           long n_prev, long n_joiners,
                                           double* out);
FBLOOP_API fbloop_status fbloop_bias_approx(double s, double delta_p,
                                            double* out);
FBLOOP_API fbloop_status fbloop_bias_sweep(const double* s_values, size_t n_s,
                                           const double* delta_p_values,
                                           size_t n_delta_p, char** csv);
FBLOOP_API fbloop_status fbloop_bias_panel(double s, double p, double delta_p,
                                           long n_prev, long n_joiners,
                                           uint64_t seed, double* s_hat);

/* Language model and text metrics. */
FBLOOP_API fbloop_status fbloop_lm_train(const char* corpus_path, double k,
                                         double alpha, fbloop_lm** out);
FBLOOP_API fbloop_status fbloop_lm_load(const char* path, fbloop_lm** out);
FBLOOP_API fbloop_status fbloop_lm_to_json(const fbloop_lm* lm, char** out);
FBLOOP_API fbloop_status fbloop_lm_perplexity(const fbloop_lm* lm,
                                              const char* sentence,
                                              double* out);
FBLOOP_API void fbloop_lm_free(fbloop_lm* lm);

/* options_json: window_days, origin_h, end_h, quiet_period_days. */
FBLOOP_API fbloop_status fbloop_lang_trend(const fbloop_log* log,
                                           const fbloop_lm* lm,
                                           const char* options_json,
                                           char** csv, char** summary_json);
/* metric is one of "selfbleu", "jaccard", "wed"; embeddings_path is only
 * read for "wed". */
FBLOOP_API fbloop_status fbloop_lang_diversity(const char* sentences_path,
                                               const char* metric,
                                               const char* embeddings_path,
                                               double* out);
FBLOOP_API fbloop_status fbloop_lang_chisq(long helpful_high, long helpful_low,
                                           long unhelpful_high,
                                           long unhelpful_low,
                                           double* statistic, double* p_value,
                                           double* rate_high, double* rate_low);
/* Reads a 2x2 table: rows helpful/unhelpful, columns high/low perplexity. */
FBLOOP_API fbloop_status fbloop_lang_read_table(const char* path,
                                                long counts[4]);

#ifdef __cplusplus
}
#endif

#endif  /* FBLOOP_FBLOOP_H_ */
