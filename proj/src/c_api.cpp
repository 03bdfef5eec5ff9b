// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#include "loradrop/loradrop.h"

#include <algorithm>
#include <string>

#include "loradrop/costmodel.hpp"
#include "loradrop/harness.hpp"
#include "loradrop/io_util.hpp"
#include "loradrop/model.hpp"
#include "loradrop/profiler.hpp"
#include "loradrop/scheduler.hpp"

struct ld_model {
    loradrop::Model model;
};
struct ld_schedule {
    loradrop::Schedule schedule;
};
struct ld_decode_result {
    loradrop::DecodeResult result;
};
struct ld_traces {
    loradrop::TraceSet traces;
};
struct ld_profile {
    loradrop::RedundancyProfile profile;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_output;

ld_status to_status(loradrop::ErrorCode code) { return static_cast<ld_status>(static_cast<int>(code)); }

template <class F>
ld_status guarded(F&& body) {
    try {
        g_last_error.clear();
        body();
        return LD_OK;
    } catch (const loradrop::Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return LD_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return LD_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown exception";
        return LD_ERR_INTERNAL;
    }
}

void need(const void* p, const char* what) {
    loradrop::require(p != nullptr, loradrop::ErrorCode::kParameter, std::string(what) + " is NULL");
}

loradrop::ModelSpec from_c(const ld_model_spec& s) {
    loradrop::ModelSpec spec;
    spec.n_layers = s.n_layers;
    spec.d_model = s.d_model;
    spec.n_heads = s.n_heads;
    spec.n_kv_heads = s.n_kv_heads;
    spec.d_ff = s.d_ff;
    spec.vocab_size = s.vocab_size;
    spec.lora_rank = s.lora_rank;
    spec.lora_alpha = s.lora_alpha;
    spec.seed = s.seed;
    return spec;
}

ld_model_spec to_c(const loradrop::ModelSpec& spec) {
    return {spec.n_layers,   spec.d_model,   spec.n_heads,    spec.n_kv_heads, spec.d_ff,
            spec.vocab_size, spec.lora_rank, spec.lora_alpha, spec.seed};
}

loradrop::ComputeParams from_c(const ld_compute_params& c) { return {c.A, c.B, c.d, c.r, c.n}; }

loradrop::KvParams from_c(const ld_kv_params& c) {
    loradrop::KvParams kv;
    kv.L = c.L;
    kv.a = c.a;
    kv.h = c.h;
    kv.h_kv = c.h_kv;
    kv.d_model = c.d_model;
    kv.b = c.b;
    kv.batch = c.batch;
    kv.N = c.N;
    kv.p = c.p;
    kv.w = c.w;
    return kv;
}

void check_cell(const loradrop::DecodeStats& st, std::size_t step, std::size_t layer) {
    loradrop::require(step < st.steps && layer < st.n_layers, loradrop::ErrorCode::kParameter,
                      "decode cell out of range");
}

}  // namespace

extern "C" {

const char* ld_version(void) { return "0.1.0"; }

const char* ld_status_name(ld_status status) {
    if (status == LD_OK) return "ok";
    if (status == LD_ERR_INTERNAL) return "internal";
    if (status >= LD_ERR_SHAPE && status <= LD_ERR_CONFIG)
        return loradrop::error_code_name(static_cast<loradrop::ErrorCode>(status));
    return "unknown";
}

const char* ld_last_error(void) { return g_last_error.c_str(); }
const char* ld_last_output(void) { return g_last_output.c_str(); }

int ld_exit_code_for_status(ld_status status) {
    if (status == LD_OK) return 0;
    if (status >= LD_ERR_SHAPE && status <= LD_ERR_CONFIG)
        return loradrop::exit_code_for(static_cast<loradrop::ErrorCode>(status));
    return 3;
}

size_t ld_real_size(void) { return sizeof(loradrop::Real); }

void ld_model_spec_default(ld_model_spec* spec) {
    if (spec) *spec = to_c(loradrop::ModelSpec{});
}

ld_status ld_model_create(const ld_model_spec* spec, ld_model** out) {
    return guarded([&] {
        need(spec, "spec");
        need(out, "out");
        *out = new ld_model{loradrop::Model(from_c(*spec))};
    });
}

ld_status ld_model_load(const char* path, ld_model** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new ld_model{loradrop::load_model(path)};
    });
}

ld_status ld_model_save(const ld_model* model, const char* path) {
    return guarded([&] {
        need(model, "model");
        need(path, "path");
        loradrop::save_model(model->model, path);
    });
}

void ld_model_destroy(ld_model* model) { delete model; }

ld_status ld_model_get_spec(const ld_model* model, ld_model_spec* out) {
    return guarded([&] {
        need(model, "model");
        need(out, "out");
        *out = to_c(model->model.spec());
    });
}

ld_status ld_model_set_adapter(ld_model* model, size_t layer, size_t rank, const double* a, const double* b,
                               double alpha) {
    return guarded([&] {
        need(model, "model");
        need(a, "a");
        need(b, "b");
        const std::size_t d = model->model.spec().d_model;
        loradrop::LoraAdapter adapter;
        adapter.A = loradrop::Matrix(rank, d, std::vector<loradrop::Real>(a, a + rank * d));
        adapter.B = loradrop::Matrix(d, rank, std::vector<loradrop::Real>(b, b + rank * d));
        adapter.alpha = alpha;
        model->model.set_adapter(layer, std::move(adapter));
    });
}

ld_status ld_model_load_adapters(ld_model* model, const char* path) {
    return guarded([&] {
        need(model, "model");
        need(path, "path");
        for (auto& [layer, adapter] : loradrop::load_adapters(path)) model->model.set_adapter(layer, std::move(adapter));
    });
}

ld_status ld_schedule_create(const size_t* drop_layers, size_t count, size_t k, size_t protected_prefix,
                             size_t protected_suffix, ld_schedule** out) {
    return guarded([&] {
        need(out, "out");
        if (count) need(drop_layers, "drop_layers");
        loradrop::Schedule s;
        s.drop_set.insert(drop_layers, drop_layers + count);
        s.k = k;
        s.protected_prefix = protected_prefix;
        s.protected_suffix = protected_suffix;
        *out = new ld_schedule{std::move(s)};
    });
}

void ld_schedule_destroy(ld_schedule* schedule) { delete schedule; }

ld_status ld_schedule_indicator(const ld_schedule* schedule, size_t n_layers, size_t layer, size_t step,
                                int* is_full) {
    return guarded([&] {
        need(schedule, "schedule");
        need(is_full, "is_full");
        *is_full = loradrop::indicator(schedule->schedule, n_layers, layer, schedule->schedule.phase_origin + step) ==
                   loradrop::StepMode::Full;
    });
}

ld_status ld_schedule_drop_ratio(const ld_schedule* schedule, size_t n_layers, double* out) {
    return guarded([&] {
        need(schedule, "schedule");
        need(out, "out");
        *out = loradrop::drop_ratio(schedule->schedule, n_layers);
    });
}

ld_status ld_decode(const ld_model* model, const ld_schedule* schedule, const uint32_t* prompt, size_t prompt_length,
                    size_t m, const uint32_t* forced, ld_decode_result** out) {
    return guarded([&] {
        need(model, "model");
        need(schedule, "schedule");
        need(out, "out");
        if (prompt_length) need(prompt, "prompt");
        loradrop::DecodeOptions options;
        if (forced) options.forced_tokens = std::vector<loradrop::TokenId>(forced, forced + m);
        *out = new ld_decode_result{loradrop::decode(
            model->model, schedule->schedule, std::span<const loradrop::TokenId>(prompt, prompt_length), m, options)};
    });
}

void ld_decode_result_destroy(ld_decode_result* result) { delete result; }

ld_status ld_decode_get_summary(const ld_decode_result* result, ld_decode_summary* out) {
    return guarded([&] {
        need(result, "result");
        need(out, "out");
        const loradrop::DecodeStats& st = result->result.stats;
        out->steps = st.steps;
        out->n_layers = st.n_layers;
        out->prompt_length = st.prompt_length;
        out->refresh_steps = static_cast<size_t>(std::count(st.refresh.begin(), st.refresh.end(), 1));
        out->all_full_steps = st.all_full_steps();
        out->full_macs = st.full_macs;
        out->lora_macs = st.lora_macs;
        out->head_macs = st.head_macs;
    });
}

ld_status ld_decode_tokens(const ld_decode_result* result, uint32_t* out, size_t cap, size_t* count) {
    return guarded([&] {
        need(result, "result");
        const auto& tokens = result->result.tokens;
        if (cap) need(out, "out");
        std::copy_n(tokens.begin(), std::min(cap, tokens.size()), out);
        if (count) *count = tokens.size();
    });
}

ld_status ld_decode_logits(const ld_decode_result* result, size_t step, double* out, size_t cap) {
    return guarded([&] {
        need(result, "result");
        need(out, "out");
        const auto& logits = result->result.logits;
        loradrop::require(step < logits.size(), loradrop::ErrorCode::kParameter, "logits step out of range");
        const loradrop::Vector& v = logits[step];
        loradrop::require(cap >= v.dim(), loradrop::ErrorCode::kParameter, "logits buffer smaller than vocab");
        std::copy(v.values().begin(), v.values().end(), out);
    });
}

ld_status ld_decode_mode(const ld_decode_result* result, size_t step, size_t layer, int* is_full) {
    return guarded([&] {
        need(result, "result");
        need(is_full, "is_full");
        check_cell(result->result.stats, step, layer);
        *is_full = result->result.stats.mode(step, layer) == loradrop::StepMode::Full;
    });
}

ld_status ld_decode_cell_macs(const ld_decode_result* result, size_t step, size_t layer, uint64_t* out) {
    return guarded([&] {
        need(result, "result");
        need(out, "out");
        check_cell(result->result.stats, step, layer);
        *out = result->result.stats.macs(step, layer);
    });
}

ld_status ld_decode_cache_entries(const ld_decode_result* result, size_t layer, size_t* out) {
    return guarded([&] {
        need(result, "result");
        need(out, "out");
        loradrop::require(layer < result->result.stats.n_layers, loradrop::ErrorCode::kParameter,
                          "layer out of range");
        *out = result->result.stats.decode_entries(layer);
    });
}

ld_status ld_decode_write_csv(const ld_decode_result* result, const char* path) {
    return guarded([&] {
        need(result, "result");
        need(path, "path");
        loradrop::atomic_write(path, result->result.stats.to_csv());
    });
}

ld_status ld_traces_collect(const ld_model* model, const uint32_t* tokens, const size_t* lengths, size_t count,
                            unsigned threads, ld_traces** out) {
    return guarded([&] {
        need(model, "model");
        need(out, "out");
        if (count) {
            need(tokens, "tokens");
            need(lengths, "lengths");
        }
        loradrop::Corpus corpus;
        std::size_t offset = 0;
        for (std::size_t i = 0; i < count; ++i) {
            corpus.emplace_back(tokens + offset, tokens + offset + lengths[i]);
            offset += lengths[i];
        }
        *out = new ld_traces{loradrop::collect_traces(model->model, corpus, "capi", threads ? threads : 1)};
    });
}

ld_status ld_traces_save(const ld_traces* traces, const char* path) {
    return guarded([&] {
        need(traces, "traces");
        need(path, "path");
        loradrop::save_traces(traces->traces, path);
    });
}

ld_status ld_traces_load(const char* path, ld_traces** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new ld_traces{loradrop::load_traces(path)};
    });
}

void ld_traces_destroy(ld_traces* traces) { delete traces; }

ld_status ld_profile_measure(const ld_traces* traces, size_t delta_max, const size_t* score_deltas,
                             size_t n_score_deltas, ld_profile** out) {
    return guarded([&] {
        need(traces, "traces");
        need(out, "out");
        std::vector<std::size_t> deltas = {1, 2, 3};
        if (score_deltas) deltas.assign(score_deltas, score_deltas + n_score_deltas);
        *out = new ld_profile{loradrop::measure_similarity(traces->traces, delta_max, deltas)};
    });
}

void ld_profile_destroy(ld_profile* profile) { delete profile; }

ld_status ld_profile_sim(const ld_profile* profile, size_t layer, size_t delta, double* out) {
    return guarded([&] {
        need(profile, "profile");
        need(out, "out");
        const auto& p = profile->profile;
        loradrop::require(layer < p.n_layers && delta >= 1 && delta <= p.delta_max, loradrop::ErrorCode::kParameter,
                          "profile cell out of range");
        *out = p.mean_sim(layer, delta);
    });
}

ld_status ld_profile_pairs(const ld_profile* profile, size_t layer, size_t delta, uint64_t* out) {
    return guarded([&] {
        need(profile, "profile");
        need(out, "out");
        const auto& p = profile->profile;
        loradrop::require(layer < p.n_layers && delta >= 1 && delta <= p.delta_max, loradrop::ErrorCode::kParameter,
                          "profile cell out of range");
        *out = p.pair_count(layer, delta);
    });
}

ld_status ld_profile_score(const ld_profile* profile, size_t layer, double* out) {
    return guarded([&] {
        need(profile, "profile");
        need(out, "out");
        loradrop::require(layer < profile->profile.n_layers, loradrop::ErrorCode::kParameter, "layer out of range");
        *out = profile->profile.score[layer];
    });
}

ld_status ld_profile_horizon(const ld_profile* profile, double threshold, size_t* out) {
    return guarded([&] {
        need(profile, "profile");
        need(out, "out");
        *out = loradrop::similarity_horizon(profile->profile, threshold);
    });
}

ld_status ld_profile_write_csv(const ld_profile* profile, const char* path) {
    return guarded([&] {
        need(profile, "profile");
        need(path, "path");
        loradrop::atomic_write(path, profile->profile.to_csv());
    });
}

ld_status ld_profile_drop_list(const ld_profile* profile, double p, size_t protected_prefix, size_t protected_suffix,
                               size_t* out, size_t cap, size_t* count) {
    return guarded([&] {
        need(profile, "profile");
        const auto drop = loradrop::build_drop_list(profile->profile, p, protected_prefix, protected_suffix);
        if (cap) need(out, "out");
        std::size_t i = 0;
        for (auto it = drop.begin(); it != drop.end() && i < cap; ++it) out[i++] = *it;
        if (count) *count = drop.size();
    });
}

ld_status ld_calibrate_layer(ld_model* model, const ld_traces* traces, size_t layer, size_t rank, double lambda,
                             double* objective) {
    return guarded([&] {
        need(model, "model");
        need(traces, "traces");
        loradrop::CalibrationResult r = loradrop::calibrate_lora(traces->traces, model->model, layer, rank, lambda);
        if (objective) *objective = r.objective;
        model->model.set_adapter(layer, std::move(r.adapter));
    });
}

ld_status ld_cost_c_full(const ld_compute_params* cp, double cache_length, double* out) {
    return guarded([&] {
        need(cp, "cp");
        need(out, "out");
        *out = loradrop::c_full(from_c(*cp), cache_length);
    });
}

ld_status ld_cost_c_avg(const ld_compute_params* cp, double rho, size_t k, double cache_length, double* out) {
    return guarded([&] {
        need(cp, "cp");
        need(out, "out");
        *out = loradrop::c_avg(from_c(*cp), rho, k, cache_length);
    });
}

ld_status ld_cost_speedup(const ld_compute_params* cp, double rho, size_t k, double cache_length, double* out) {
    return guarded([&] {
        need(cp, "cp");
        need(out, "out");
        *out = loradrop::speedup(from_c(*cp), rho, k, cache_length);
    });
}

ld_status ld_cost_speedup_inf(double rho, size_t k, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = loradrop::speedup_inf(rho, k);
    });
}

ld_status ld_cost_latency_quantile(double pq, size_t k, double tau_ref, double tau_lora, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = loradrop::latency_quantile(pq, k, loradrop::LatencyPair{tau_ref, tau_lora});
    });
}

ld_status ld_cost_kv_baseline(const ld_kv_params* kv, double* out) {
    return guarded([&] {
        need(kv, "kv");
        need(out, "out");
        *out = loradrop::kv_baseline(from_c(*kv));
    });
}

ld_status ld_cost_kv_drop(const ld_kv_params* kv, double* out) {
    return guarded([&] {
        need(kv, "kv");
        need(out, "out");
        *out = loradrop::kv_drop(from_c(*kv));
    });
}

ld_status ld_cost_kv_save_percent(size_t L, size_t a, double p, double w, double* out) {
    return guarded([&] {
        need(out, "out");
        *out = loradrop::kv_save_percent(L, a, p, w);
    });
}

ld_status ld_cost_fit(const ld_decode_result* result, size_t d, size_t r, ld_compute_params* out, double* rms) {
    return guarded([&] {
        need(result, "result");
        need(out, "out");
        const loradrop::ComputeFit fit = loradrop::fit_compute_params(result->result.stats, d, r);
        *out = {fit.params.A, fit.params.B, fit.params.d, fit.params.r, fit.params.n};
        if (rms) *rms = fit.rms_residual;
    });
}

ld_status ld_run_command(const char* command, const char* config_path, const char* overrides_json) {
    g_last_output.clear();
    return guarded([&] {
        need(command, "command");
        nlohmann::json overrides;
        if (overrides_json && *overrides_json) {
            try {
                overrides = nlohmann::json::parse(overrides_json);
            } catch (const nlohmann::json::exception& e) {
                loradrop::fail(loradrop::ErrorCode::kConfig, std::string("overrides: ") + e.what());
            }
        }
        std::optional<std::filesystem::path> path;
        if (config_path && *config_path) path = config_path;
        const loradrop::RunConfig config = loradrop::RunConfig::from_json(loradrop::load_config_document(path, overrides));
        g_last_output = loradrop::run_command(command, config).summary;
    });
}

}  // extern "C"
