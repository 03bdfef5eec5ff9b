// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "loradrop/model.hpp"

namespace loradrop {

// Hidden states of one sequence: the embedding row and every layer's output at
// each position.
struct ActivationTrace {
    std::string corpus_id;
    std::uint64_t seed = 0;
    std::vector<Vector> embedding;            // [t]
    std::vector<std::vector<Vector>> layers;  // [layer][t]

    std::size_t length() const noexcept { return layers.empty() ? 0 : layers.front().size(); }
    std::size_t n_layers() const noexcept { return layers.size(); }
    // Input to `layer` at position t: the embedding for layer 0, otherwise the
    // previous layer's output.
    const Vector& layer_input(std::size_t layer, std::size_t t) const;
};

using TraceSet = std::vector<ActivationTrace>;
using Corpus = std::vector<std::vector<TokenId>>;

// Full-model forward over every sequence. Sequences are independent, so they
// are spread over `threads` workers; results do not depend on the thread count.
TraceSet collect_traces(const Model& model, const Corpus& corpus, const std::string& corpus_id = "",
                        unsigned threads = 1);

void save_traces(const TraceSet& traces, const std::filesystem::path& path);
TraceSet load_traces(const std::filesystem::path& path);

struct RedundancyProfile {
    std::size_t n_layers = 0;
    std::size_t delta_max = 0;
    std::vector<double> sim;            // [layer][delta-1]
    std::vector<std::uint64_t> pairs;   // [layer][delta-1]
    std::vector<std::size_t> score_deltas;
    std::vector<double> score;          // per layer, mean of sim over score_deltas

    double mean_sim(std::size_t layer, std::size_t delta) const { return sim.at(layer * delta_max + delta - 1); }
    std::uint64_t pair_count(std::size_t layer, std::size_t delta) const {
        return pairs.at(layer * delta_max + delta - 1);
    }
    // Mean over layers of sim(layer, delta), delta = 1..delta_max.
    std::vector<double> layer_mean_curve() const;

    // layer,delta,mean_sim,pairs
    std::string to_csv() const;
};

// Mean cosine similarity between unit-normalized h(t) and h(t+delta) over all
// in-window positions of all traces. Deltas in `score_deltas` above delta_max
// are dropped from the aggregate.
RedundancyProfile measure_similarity(const TraceSet& traces, std::size_t delta_max,
                                     std::vector<std::size_t> score_deltas = {1, 2, 3});

// Largest delta such that every delta' <= delta has aggregated similarity at or
// above the threshold; 0 if delta = 1 already falls below.
std::size_t similarity_horizon(const std::vector<double>& curve, double threshold = 0.50);
std::size_t similarity_horizon(const RedundancyProfile& profile, double threshold = 0.50);

// Top floor(p * S) skippable layers by score (ties to the lower index), where
// S excludes the protected bands. Returned sorted ascending.
std::set<std::size_t> build_drop_list(const std::vector<double>& scores, double p, std::size_t protected_prefix = 3,
                                      std::size_t protected_suffix = 1);
inline std::set<std::size_t> build_drop_list(const RedundancyProfile& profile, double p,
                                             std::size_t protected_prefix = 3, std::size_t protected_suffix = 1) {
    return build_drop_list(profile.score, p, protected_prefix, protected_suffix);
}

// Plain text, one layer index per line.
std::string drop_list_text(const std::set<std::size_t>& drop);
std::set<std::size_t> parse_drop_list(const std::string& text);

nlohmann::json drop_list_sidecar(const std::set<std::size_t>& drop, double p, std::size_t n_layers,
                                 std::size_t protected_prefix, std::size_t protected_suffix,
                                 const RedundancyProfile& profile);

struct CalibrationResult {
    LoraAdapter adapter;
    double objective = 0.0;        // ridge objective at the rank-r adapter
    double reuse_objective = 0.0;  // objective with W = 0 (pure reuse)
    double full_objective = 0.0;   // objective at the unconstrained ridge solution
    std::size_t samples = 0;
};

// Teacher-forced ridge fit of the surrogate residual for one layer:
//   minimize sum_t |(x_t - x_{t-1}) - alpha W u_t|^2 + lambda |W|_F^2
// with u_t the layer input, solved through the normal equations and then
// truncated to rank r.
CalibrationResult calibrate_lora(const TraceSet& traces, const Model& model, std::size_t layer, std::size_t rank,
                                 double lambda);

// The ridge objective above for an arbitrary adapter.
double calibration_objective(const TraceSet& traces, std::size_t layer, const LoraAdapter& adapter, double lambda);

}  // namespace loradrop
