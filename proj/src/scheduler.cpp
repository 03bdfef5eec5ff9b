// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#include "loradrop/scheduler.hpp"

#include <chrono>

#include "loradrop/io_util.hpp"

namespace loradrop {

const char* step_mode_name(StepMode mode) noexcept { return mode == StepMode::Full ? "full" : "lora"; }

void Schedule::validate(std::size_t n_layers) const {
    for (std::size_t layer : drop_set) {
        require(layer < n_layers, ErrorCode::kParameter,
                "schedule: drop layer " + std::to_string(layer) + " >= n_layers " + std::to_string(n_layers));
        require(layer >= protected_prefix && layer + protected_suffix < n_layers, ErrorCode::kParameter,
                "schedule: drop layer " + std::to_string(layer) + " is protected");
    }
}

bool Schedule::is_refresh(std::size_t step) const {
    require(step >= phase_origin, ErrorCode::kParameter, "schedule: step precedes phase origin");
    return (step - phase_origin) % period() == 0;
}

std::size_t Schedule::skippable_count(std::size_t n_layers) const noexcept {
    const std::size_t protected_count = protected_prefix + protected_suffix;
    return n_layers > protected_count ? n_layers - protected_count : 0;
}

StepMode indicator(const Schedule& s, std::size_t n_layers, std::size_t layer, std::size_t step) {
    require(layer < n_layers, ErrorCode::kParameter, "indicator: layer index out of range");
    if (s.is_refresh(step) || s.drop_set.count(layer) == 0) return StepMode::Full;
    return StepMode::Lora;
}

double drop_ratio(const Schedule& s, std::size_t n_layers) {
    require(n_layers > 0, ErrorCode::kParameter, "drop_ratio: n_layers must be positive");
    return static_cast<double>(s.drop_set.size()) / static_cast<double>(n_layers);
}

std::size_t refresh_count(std::size_t m, std::size_t k) noexcept { return (m + k) / (k + 1); }

std::uint64_t DecodeStats::step_layer_macs(std::size_t step) const {
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < n_layers; ++i) total += macs(step, i);
    return total;
}

std::size_t DecodeStats::decode_entries(std::size_t layer) const {
    if (steps == 0) return 0;
    return cache_entries.at((steps - 1) * n_layers + layer) - prompt_length;
}

std::size_t DecodeStats::all_full_steps() const {
    std::size_t count = 0;
    for (std::size_t t = 0; t < steps; ++t) {
        bool all_full = true;
        for (std::size_t i = 0; i < n_layers && all_full; ++i) all_full = mode(t, i) == StepMode::Full;
        count += all_full ? 1 : 0;
    }
    return count;
}

std::string DecodeStats::to_csv() const {
    CsvWriter csv({"step", "layer", "mode", "macs", "cache_entries"});
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t i = 0; i < n_layers; ++i)
            csv.add_row({std::to_string(t), std::to_string(i), step_mode_name(mode(t, i)), std::to_string(macs(t, i)),
                         std::to_string(cache_entries[t * n_layers + i])});
    return csv.str();
}

DecodeResult decode(const Model& model, const Schedule& schedule, std::span<const TokenId> prompt, std::size_t m,
                    const DecodeOptions& options) {
    const std::size_t n = model.spec().n_layers;
    require(m >= 1, ErrorCode::kInput, "decode: m must be >= 1");
    schedule.validate(n);
    if (options.forced_tokens)
        require(options.forced_tokens->size() >= m, ErrorCode::kInput, "decode: forced_tokens shorter than m");

    PrefillResult pre = prefill(model, prompt, nullptr);
    const std::size_t T = prompt.size();
    Schedule sched = schedule;
    sched.phase_origin = T;

    DecodeResult r;
    r.cache = std::move(pre.cache);
    r.ledger = std::move(pre.ledger);
    DecodeStats& st = r.stats;
    st.steps = m;
    st.n_layers = n;
    st.prompt_length = T;
    st.modes.resize(m * n);
    st.refresh.resize(m);
    st.layer_macs.resize(m * n);
    st.cache_len_before.resize(m * n);
    st.cache_entries.resize(m * n);
    st.step_seconds.resize(m);

    TokenId next = options.forced_tokens ? (*options.forced_tokens)[0] : argmax(pre.logits.span());
    for (std::size_t t = 0; t < m; ++t) {
        const auto started = std::chrono::steady_clock::now();
        const std::size_t pos = T + t;
        r.tokens.push_back(next);
        st.refresh[t] = sched.is_refresh(pos) ? 1 : 0;

        Vector x = embed(model, next);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t cell = t * n + i;
            OpCounter counter;
            const StepMode mode = indicator(sched, n, i, pos);
            st.modes[cell] = mode;
            st.cache_len_before[cell] = r.cache.entry_count(i);
            if (mode == StepMode::Full) {
                x = full_layer_forward(model, i, x, r.cache, pos, &counter);
                st.full_macs += counter.macs;
            } else {
                // Chained reuse: the ledger holds the previous step's output,
                // exact or approximated.
                x = lora_layer_update(model.adapter(i), r.ledger.outputs[i], x, &counter);
                st.lora_macs += counter.macs;
            }
            r.ledger.outputs[i] = x;
            st.layer_macs[cell] = counter.macs;
            st.cache_entries[cell] = r.cache.entry_count(i);
        }
        OpCounter head;
        Vector logits = compute_logits(model, x, &head);
        st.head_macs += head.macs;
        if (t + 1 < m) next = options.forced_tokens ? (*options.forced_tokens)[t + 1] : argmax(logits.span());
        if (options.keep_logits) r.logits.push_back(std::move(logits));
        st.step_seconds[t] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    return r;
}

std::vector<std::size_t> simulate_cache_writes(const Schedule& schedule, std::size_t n_layers, std::size_t m) {
    schedule.validate(n_layers);
    std::vector<std::size_t> writes(n_layers, 0);
    for (std::size_t t = 0; t < m; ++t)
        for (std::size_t i = 0; i < n_layers; ++i)
            if (indicator(schedule, n_layers, i, schedule.phase_origin + t) == StepMode::Full) ++writes[i];
    return writes;
}

}  // namespace loradrop
