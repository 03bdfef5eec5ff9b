/* Copyright (C) 2026 The loradrop authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the loradrop core. All objects are opaque handles created
 * and destroyed through this API. Every fallible call returns an ld_status;
 * on failure ld_last_error() describes the problem (per thread). Real-valued
 * data crosses the boundary as double regardless of the core's precision.
 */
#ifndef LORADROP_LORADROP_H
#define LORADROP_LORADROP_H

#include <stddef.h>
#include <stdint.h>

#if defined(LORADROP_BUILDING_LIBRARY)
#define LD_API __attribute__((visibility("default")))
#else
#define LD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ld_status {
    LD_OK = 0,
    LD_ERR_SHAPE = 1,
    LD_ERR_PARAMETER = 2,
    LD_ERR_INPUT = 3,
    LD_ERR_NUMERIC = 4,
    LD_ERR_UNDEFINED_SIMILARITY = 5,
    LD_ERR_RANK_DEFICIENT = 6,
    LD_ERR_SPEC = 7,
    LD_ERR_IO = 8,
    LD_ERR_CONFIG = 9,
    LD_ERR_INTERNAL = 100
} ld_status;

typedef struct ld_model ld_model;
typedef struct ld_schedule ld_schedule;
typedef struct ld_decode_result ld_decode_result;
typedef struct ld_traces ld_traces;
typedef struct ld_profile ld_profile;

LD_API const char* ld_version(void);
LD_API const char* ld_status_name(ld_status status);
/* Message for the most recent failure on this thread; "" if none. */
LD_API const char* ld_last_error(void);
/* Summary text produced by the last ld_run_command on this thread. */
LD_API const char* ld_last_output(void);
/* Process exit code for a status: 0 ok, 1 usage/config, 2 I/O, 3 numeric. */
LD_API int ld_exit_code_for_status(ld_status status);
/* 4 or 8: byte width of the core's real type. */
LD_API size_t ld_real_size(void);

/* ---- model ---- */

typedef struct ld_model_spec {
    size_t n_layers;
    size_t d_model;
    size_t n_heads;
    size_t n_kv_heads;
    size_t d_ff;
    size_t vocab_size;
    size_t lora_rank;
    double lora_alpha;
    uint64_t seed;
} ld_model_spec;

LD_API void ld_model_spec_default(ld_model_spec* spec);
LD_API ld_status ld_model_create(const ld_model_spec* spec, ld_model** out);
LD_API ld_status ld_model_load(const char* path, ld_model** out);
LD_API ld_status ld_model_save(const ld_model* model, const char* path);
LD_API void ld_model_destroy(ld_model* model);
LD_API ld_status ld_model_get_spec(const ld_model* model, ld_model_spec* out);
/* A is rank x d_model, B is d_model x rank, both row-major. */
LD_API ld_status ld_model_set_adapter(ld_model* model, size_t layer, size_t rank, const double* a, const double* b,
                                      double alpha);
LD_API ld_status ld_model_load_adapters(ld_model* model, const char* path);

/* ---- schedule ---- */

LD_API ld_status ld_schedule_create(const size_t* drop_layers, size_t count, size_t k, size_t protected_prefix,
                                    size_t protected_suffix, ld_schedule** out);
LD_API void ld_schedule_destroy(ld_schedule* schedule);
/* Mode of `layer` at decode step `step` (counted from the first decode token):
 * *is_full = 1 for a full forward, 0 for the surrogate. */
LD_API ld_status ld_schedule_indicator(const ld_schedule* schedule, size_t n_layers, size_t layer, size_t step,
                                       int* is_full);
LD_API ld_status ld_schedule_drop_ratio(const ld_schedule* schedule, size_t n_layers, double* out);

/* ---- decode ---- */

typedef struct ld_decode_summary {
    size_t steps;
    size_t n_layers;
    size_t prompt_length;
    size_t refresh_steps;
    size_t all_full_steps;
    uint64_t full_macs;
    uint64_t lora_macs;
    uint64_t head_macs;
} ld_decode_summary;

/* `forced` may be NULL; otherwise it supplies the m tokens fed at each step. */
LD_API ld_status ld_decode(const ld_model* model, const ld_schedule* schedule, const uint32_t* prompt,
                           size_t prompt_length, size_t m, const uint32_t* forced, ld_decode_result** out);
LD_API void ld_decode_result_destroy(ld_decode_result* result);
LD_API ld_status ld_decode_get_summary(const ld_decode_result* result, ld_decode_summary* out);
/* Copies min(cap, m) tokens; *count receives m. */
LD_API ld_status ld_decode_tokens(const ld_decode_result* result, uint32_t* out, size_t cap, size_t* count);
/* Copies the vocab_size logits of `step`; cap must be at least vocab_size. */
LD_API ld_status ld_decode_logits(const ld_decode_result* result, size_t step, double* out, size_t cap);
LD_API ld_status ld_decode_mode(const ld_decode_result* result, size_t step, size_t layer, int* is_full);
LD_API ld_status ld_decode_cell_macs(const ld_decode_result* result, size_t step, size_t layer, uint64_t* out);
/* KV entries `layer` gained during decode. */
LD_API ld_status ld_decode_cache_entries(const ld_decode_result* result, size_t layer, size_t* out);
LD_API ld_status ld_decode_write_csv(const ld_decode_result* result, const char* path);

/* ---- profiling and calibration ---- */

/* `tokens` holds the sequences back to back; lengths[i] is sequence i's length. */
LD_API ld_status ld_traces_collect(const ld_model* model, const uint32_t* tokens, const size_t* lengths,
                                   size_t count, unsigned threads, ld_traces** out);
LD_API ld_status ld_traces_save(const ld_traces* traces, const char* path);
LD_API ld_status ld_traces_load(const char* path, ld_traces** out);
LD_API void ld_traces_destroy(ld_traces* traces);

/* `score_deltas` may be NULL to use {1, 2, 3}. */
LD_API ld_status ld_profile_measure(const ld_traces* traces, size_t delta_max, const size_t* score_deltas,
                                    size_t n_score_deltas, ld_profile** out);
LD_API void ld_profile_destroy(ld_profile* profile);
LD_API ld_status ld_profile_sim(const ld_profile* profile, size_t layer, size_t delta, double* out);
LD_API ld_status ld_profile_pairs(const ld_profile* profile, size_t layer, size_t delta, uint64_t* out);
LD_API ld_status ld_profile_score(const ld_profile* profile, size_t layer, double* out);
LD_API ld_status ld_profile_horizon(const ld_profile* profile, double threshold, size_t* out);
LD_API ld_status ld_profile_write_csv(const ld_profile* profile, const char* path);
/* Writes up to cap ascending layer indices; *count receives the list size. */
LD_API ld_status ld_profile_drop_list(const ld_profile* profile, double p, size_t protected_prefix,
                                      size_t protected_suffix, size_t* out, size_t cap, size_t* count);

/* Fits and installs the adapter for `layer`; objective may be NULL. */
LD_API ld_status ld_calibrate_layer(ld_model* model, const ld_traces* traces, size_t layer, size_t rank,
                                    double lambda, double* objective);

/* ---- analytic cost model ---- */

typedef struct ld_compute_params {
    double A;
    double B;
    size_t d;
    size_t r;
    size_t n;
} ld_compute_params;

typedef struct ld_kv_params {
    size_t L;
    size_t a;
    size_t h;
    size_t h_kv;
    size_t d_model;
    size_t b;
    size_t batch;
    size_t N;
    double p;
    size_t w;
} ld_kv_params;

LD_API ld_status ld_cost_c_full(const ld_compute_params* cp, double cache_length, double* out);
LD_API ld_status ld_cost_c_avg(const ld_compute_params* cp, double rho, size_t k, double cache_length, double* out);
LD_API ld_status ld_cost_speedup(const ld_compute_params* cp, double rho, size_t k, double cache_length,
                                 double* out);
LD_API ld_status ld_cost_speedup_inf(double rho, size_t k, double* out);
LD_API ld_status ld_cost_latency_quantile(double pq, size_t k, double tau_ref, double tau_lora, double* out);
LD_API ld_status ld_cost_kv_baseline(const ld_kv_params* kv, double* out);
LD_API ld_status ld_cost_kv_drop(const ld_kv_params* kv, double* out);
LD_API ld_status ld_cost_kv_save_percent(size_t L, size_t a, double p, double w, double* out);
/* Least-squares A, B from the full-forward cells of a decode; rms may be NULL. */
LD_API ld_status ld_cost_fit(const ld_decode_result* result, size_t d, size_t r, ld_compute_params* out,
                             double* rms);

/* ---- pipeline commands ---- */

/* Runs profile | calibrate | decode | sweep | cost. config_path and
 * overrides_json (a JSON merge patch) may be NULL. The summary is available
 * from ld_last_output(). */
LD_API ld_status ld_run_command(const char* command, const char* config_path, const char* overrides_json);

#ifdef __cplusplus
}
#endif

#endif /* LORADROP_LORADROP_H */
