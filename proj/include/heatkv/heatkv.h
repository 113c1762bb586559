/* SPDX-License-Identifier: Apache-2.0 */

/*
 * heatkv - head-granular KV-cache pruning schedules for next-scale
 * autoregressive transformers.
 *
 * The library turns calibration attention traces into per-head importance
 * scores, resolves a fractional memory budget into a static per-scale
 * eviction schedule, and replays that schedule through a layer-accurate
 * cache simulator. All functions return HEATKV_OK on success; on failure
 * heatkv_last_error() holds a message for the calling thread.
 */

#ifndef HEATKV_H
#define HEATKV_H

#include <stdint.h>

#if defined(_WIN32)
#  if defined(HEATKV_BUILDING)
#    define HEATKV_API __declspec(dllexport)
#  else
#    define HEATKV_API __declspec(dllimport)
#  endif
#else
#  define HEATKV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum heatkv_status {
    HEATKV_OK = 0,
    HEATKV_ERROR_INVALID_ARGUMENT = 1,
    HEATKV_ERROR_VALIDATION = 2,
    HEATKV_ERROR_BUDGET = 3,
    HEATKV_ERROR_IO = 4,
    HEATKV_ERROR_PARSE = 5,
    HEATKV_ERROR_DATA = 6,
    HEATKV_ERROR_SCHEDULE = 7,
    HEATKV_ERROR_UNSUPPORTED = 8,
    HEATKV_ERROR_INTERNAL = 9
} heatkv_status;

typedef enum heatkv_mode {
    HEATKV_MODE_BINARY = 0, /* prunable unit: whole heads               */
    HEATKV_MODE_SCALE = 1   /* prunable unit: individual head-scales    */
} heatkv_mode;

typedef enum heatkv_accounting {
    HEATKV_ACCOUNTING_PAPER = 0, /* future layers counted at current-scale size  */
    HEATKV_ACCOUNTING_TIGHT = 1  /* future layers counted at their physical size */
} heatkv_accounting;

/* Opaque handles. Every *_free accepts NULL. */
typedef struct heatkv_config heatkv_config;     /* scale schedule + model shape      */
typedef struct heatkv_scores heatkv_scores;     /* calibrated importance scores      */
typedef struct heatkv_schedule heatkv_schedule; /* static eviction schedule          */
typedef struct heatkv_report heatkv_report;     /* simulation report                 */

HEATKV_API const char* heatkv_version_string(void);
HEATKV_API const char* heatkv_status_name(heatkv_status status);

/* Message for the last failing call on this thread; empty after success. */
HEATKV_API const char* heatkv_last_error(void);

/* Frees strings returned through char** out-parameters. */
HEATKV_API void heatkv_string_free(char* text);

/* ---- configuration ----------------------------------------------------- */

HEATKV_API heatkv_status heatkv_config_from_json(const char* json_text, heatkv_config** out_config);
HEATKV_API heatkv_status heatkv_config_from_file(const char* path, heatkv_config** out_config);
HEATKV_API heatkv_status heatkv_config_to_json(const heatkv_config* config, char** out_json);
HEATKV_API void heatkv_config_free(heatkv_config* config);

HEATKV_API int heatkv_config_num_scales(const heatkv_config* config);
HEATKV_API int heatkv_config_sink_count(const heatkv_config* config);
HEATKV_API int heatkv_config_layers(const heatkv_config* config);
HEATKV_API int heatkv_config_heads(const heatkv_config* config);

/* t_k / c_k for 1-based scale index k. */
HEATKV_API heatkv_status heatkv_config_token_count(const heatkv_config* config, int k, int64_t* out_tokens);
HEATKV_API heatkv_status heatkv_config_cumulative_tokens(const heatkv_config* config, int k, int64_t* out_tokens);

/* Smallest feasible budget fraction, c_s / c_{K-1}. */
HEATKV_API heatkv_status heatkv_min_feasible_budget(const heatkv_config* config, double* out_fraction);

/* ---- traces and calibration -------------------------------------------- */

/*
 * Writes a synthetic trace directory (manifest.json plus sample files).
 * pattern: early_scale | local_recent | local_early | skip_previous |
 *          strict_self | uniform | random
 * level:   "raw" (per-query attention matrices) or "beta" (pre-aggregated).
 */
HEATKV_API heatkv_status heatkv_synth_traces(const heatkv_config* config, const char* pattern, uint64_t seed,
                                             int num_samples, const char* level, const char* out_dir);

/*
 * Ingests a trace directory into averaged importance scores. sink_override
 * replaces the manifest's sink count when >= 0.
 */
HEATKV_API heatkv_status heatkv_calibrate(const char* traces_dir, int sink_override, heatkv_scores** out_scores);

HEATKV_API heatkv_status heatkv_scores_read_file(const char* path, heatkv_scores** out_scores);
HEATKV_API heatkv_status heatkv_scores_write_file(const heatkv_scores* scores, const char* path);
HEATKV_API heatkv_status heatkv_scores_to_json(const heatkv_scores* scores, char** out_json);
HEATKV_API heatkv_status heatkv_scores_get_config(const heatkv_scores* scores, heatkv_config** out_config);
HEATKV_API heatkv_status heatkv_scores_cas(const heatkv_scores* scores, int layer, int head, double* out_cas);
HEATKV_API heatkv_status heatkv_scores_s_cas(const heatkv_scores* scores, int layer, int head, int k,
                                             double* out_s_cas);
HEATKV_API void heatkv_scores_free(heatkv_scores* scores);

/* ---- planning ----------------------------------------------------------- */

/*
 * Resolves a budget fraction in (0, 1] into a static eviction schedule.
 * HEATKV_ERROR_BUDGET (with the minimum feasible fraction in the message)
 * when the budget cannot hold even the sink scales.
 */
HEATKV_API heatkv_status heatkv_plan(const heatkv_scores* scores, double budget_fraction, heatkv_mode mode,
                                     heatkv_accounting accounting, heatkv_schedule** out_schedule);

HEATKV_API heatkv_status heatkv_schedule_read_file(const char* path, heatkv_schedule** out_schedule);
HEATKV_API heatkv_status heatkv_schedule_write_file(const heatkv_schedule* schedule, const char* path);
HEATKV_API heatkv_status heatkv_schedule_to_json(const heatkv_schedule* schedule, char** out_json);
HEATKV_API heatkv_status heatkv_schedule_get_config(const heatkv_schedule* schedule, heatkv_config** out_config);
HEATKV_API heatkv_status heatkv_schedule_token_cap(const heatkv_schedule* schedule, int64_t* out_cap);
HEATKV_API void heatkv_schedule_free(heatkv_schedule* schedule);

/* ---- simulation and verification ---------------------------------------- */

/*
 * Replays the schedule through the generation trajectory. Budget overruns
 * are recorded in the report, not returned as errors; structural
 * inconsistencies yield HEATKV_ERROR_SCHEDULE. batch scales byte reporting
 * only.
 */
HEATKV_API heatkv_status heatkv_simulate(const heatkv_schedule* schedule, int64_t batch, heatkv_report** out_report);

HEATKV_API int heatkv_report_num_violations(const heatkv_report* report);
HEATKV_API heatkv_status heatkv_report_peak_tokens(const heatkv_report* report, int64_t* out_tokens);
HEATKV_API heatkv_status heatkv_report_peak_bytes(const heatkv_report* report, int64_t* out_bytes);
HEATKV_API heatkv_status heatkv_report_to_json(const heatkv_report* report, char** out_json);
HEATKV_API heatkv_status heatkv_report_to_csv(const heatkv_report* report, char** out_csv);
HEATKV_API void heatkv_report_free(heatkv_report* report);

/*
 * Compares every scale's early-eviction set against the exhaustive
 * minimum-cardinality oracle. Scales whose candidate set exceeds
 * max_candidates are skipped with a notice. out_pass is 0 iff a
 * binary-mode, paper-accounting scale misses the optimum (gaps in other
 * configurations are reported informationally).
 */
HEATKV_API heatkv_status heatkv_verify_schedule(const heatkv_schedule* schedule, int max_candidates,
                                                char** out_json_report, int* out_pass);

/*
 * L x H grid for one scale as CSV: 0 retained, 1 pruned at this scale,
 * 2 evicted early, 3 absent before the scale began.
 */
HEATKV_API heatkv_status heatkv_heatmap_csv(const heatkv_schedule* schedule, int scale, char** out_csv);

#ifdef __cplusplus
}
#endif

#endif /* HEATKV_H */
