// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "loradrop/model.hpp"

namespace loradrop {

enum class StepMode : std::uint8_t { Full, Lora };

const char* step_mode_name(StepMode mode) noexcept;

// Temporal schedule: layers in `drop_set` run the low-rank surrogate except on
// refresh steps, which recur every k+1 tokens starting at `phase_origin`.
//
// The refresh test is (t - phase_origin) mod (k+1) == 0, so a cycle is one
// refresh followed by k surrogate steps. Some pseudocode for this method tests
// `t mod k`; that would put k-1 surrogate steps in a cycle and is not used.
struct Schedule {
    std::set<std::size_t> drop_set;
    std::size_t k = 0;
    std::size_t protected_prefix = 3;
    std::size_t protected_suffix = 1;
    std::size_t phase_origin = 0;

    // Throws kParameter when drop_set reaches a protected layer or n.
    void validate(std::size_t n_layers) const;

    std::size_t period() const noexcept { return k + 1; }
    bool is_refresh(std::size_t step) const;
    // Layers outside both protected bands.
    std::size_t skippable_count(std::size_t n_layers) const noexcept;
};

StepMode indicator(const Schedule& schedule, std::size_t n_layers, std::size_t layer, std::size_t step);

// |drop_set| / n.
double drop_ratio(const Schedule& schedule, std::size_t n_layers);

// ceil(m / (k+1)): decode steps that are refreshes when m steps start at the
// phase origin.
std::size_t refresh_count(std::size_t m, std::size_t k) noexcept;

struct DecodeStats {
    std::size_t steps = 0;         // m
    std::size_t n_layers = 0;      // n
    std::size_t prompt_length = 0; // T
    std::vector<StepMode> modes;   // m x n, row-major
    std::vector<std::uint8_t> refresh;          // per step
    std::vector<std::uint64_t> layer_macs;      // m x n
    std::vector<std::size_t> cache_len_before;  // m x n, entries the layer saw
    std::vector<std::size_t> cache_entries;     // m x n, entries after the step
    std::uint64_t full_macs = 0;
    std::uint64_t lora_macs = 0;
    std::uint64_t head_macs = 0;                // output projection
    std::vector<double> step_seconds;           // wall clock, informational only

    StepMode mode(std::size_t step, std::size_t layer) const { return modes.at(step * n_layers + layer); }
    std::uint64_t macs(std::size_t step, std::size_t layer) const { return layer_macs.at(step * n_layers + layer); }
    std::uint64_t layer_total_macs() const noexcept { return full_macs + lora_macs; }
    std::uint64_t step_layer_macs(std::size_t step) const;
    // Entries the layer gained during decode (final count minus prefill).
    std::size_t decode_entries(std::size_t layer) const;
    std::size_t all_full_steps() const;

    // One row per (step, layer): step,layer,mode,macs,cache_entries.
    std::string to_csv() const;
};

struct DecodeOptions {
    // When set, step t consumes forced_tokens[t] instead of the greedy token,
    // which pairs two decodes on identical contexts.
    std::optional<std::vector<TokenId>> forced_tokens;
    bool keep_logits = true;
};

struct DecodeResult {
    // tokens[t] is the token fed at decode step t (position T + t); tokens[0]
    // comes from the prefill logits and tokens[t] from step t-1's logits.
    std::vector<TokenId> tokens;
    std::vector<Vector> logits;  // per step
    DecodeStats stats;
    SparseKvCache cache;
    HiddenLedger ledger;
};

// Prefill followed by m scheduled decode steps. The schedule's phase origin is
// anchored at the first decode position, so decode step 0 is a refresh.
DecodeResult decode(const Model& model, const Schedule& schedule, std::span<const TokenId> prompt, std::size_t m,
                    const DecodeOptions& options = {});

// Cache writes per layer over m decode steps, from the indicator alone.
std::vector<std::size_t> simulate_cache_writes(const Schedule& schedule, std::size_t n_layers, std::size_t m);

}  // namespace loradrop
