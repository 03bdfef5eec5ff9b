// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "loradrop/costmodel.hpp"
#include "loradrop/model.hpp"
#include "loradrop/profiler.hpp"
#include "loradrop/scheduler.hpp"

namespace loradrop {

// Everything a subcommand needs. Built from a JSON document (the config file
// merged with command-line overrides); see README for the schema.
struct RunConfig {
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::filesystem::path output_dir = "out";

    ModelSpec model;
    std::optional<std::filesystem::path> model_path;

    std::optional<double> p;
    std::optional<std::set<std::size_t>> drop_layers;
    std::optional<std::filesystem::path> drop_list_path;
    std::size_t k = 3;
    std::size_t protected_prefix = 3;
    std::size_t protected_suffix = 1;

    std::optional<std::filesystem::path> corpus_path;
    std::size_t corpus_sequences = 8;
    std::size_t corpus_length = 32;
    double corpus_repeat_prob = 0.5;

    std::vector<TokenId> prompt_tokens;
    std::size_t prompt_length = 16;

    std::size_t m = 64;

    std::size_t delta_max = 8;
    std::vector<std::size_t> score_deltas = {1, 2, 3};
    double threshold = 0.50;

    bool calibrate = true;
    std::size_t calibration_rank = 0;  // 0: use model.lora_rank
    double calibration_lambda = 1e-3;
    std::optional<std::filesystem::path> adapters_path;

    std::vector<double> sweep_p = {0.0, 0.25, 0.5, 0.75};
    std::vector<std::size_t> sweep_k = {1, 2, 3, 5};

    double seconds_per_mac = 1e-9;

    nlohmann::json cost = nlohmann::json::object();

    // Throws kConfig on unknown keys, wrong types, or p together with drop_layers.
    // Null members count as unset.
    static RunConfig from_json(const nlohmann::json& j);
};

// Reads the config file (if any) and applies a JSON merge patch of overrides.
nlohmann::json load_config_document(const std::optional<std::filesystem::path>& path,
                                    const nlohmann::json& overrides);

// Corpus file: one sequence per line, whitespace-separated token ids; blank
// lines and lines starting with '#' are skipped.
Corpus parse_corpus(const std::string& text);
// Sticky random walk over the vocabulary: with probability repeat_prob the
// previous token repeats, which gives the hidden states temporal redundancy.
Corpus synthetic_corpus(std::size_t sequences, std::size_t length, std::size_t vocab, double repeat_prob,
                        std::uint64_t seed);

struct DriftMetrics {
    double max_abs_logit_dev = 0.0;
    double mean_abs_logit_dev = 0.0;
    double max_rel_logit_dev = 0.0;  // max |diff| over max |reference| per step
    double token_agreement = 1.0;    // next-token argmax agreement under teacher forcing
};

DriftMetrics compare_logits(const std::vector<Vector>& reference, const std::vector<Vector>& candidate);

struct Report {
    std::size_t n_layers = 0;
    std::vector<std::size_t> drop_layers;
    std::size_t k = 0;
    double rho = 0.0;
    double p_effective = 0.0;
    std::size_t m = 0;
    std::size_t prompt_length = 0;
    double mean_cache_length = 0.0;

    ComputeParams fitted;
    double fit_rms_residual = 0.0;
    double predicted_speedup = 1.0;
    double predicted_speedup_inf = 1.0;
    double measured_speedup = 1.0;
    double speedup_rel_error = 0.0;

    double predicted_cycle_macs = 0.0;
    double measured_cycle_macs = 0.0;

    double predicted_kv_bytes = 0.0;
    double measured_kv_bytes = 0.0;
    double baseline_kv_bytes = 0.0;

    DriftMetrics drift;
    double free_run_token_agreement = 1.0;
    std::vector<std::size_t> decode_cache_entries;

    nlohmann::json to_json() const;
};

// Scheduled decode paired with a full reference decode; computes, never asserts,
// the measured/predicted gaps.
struct PairedRun {
    DecodeResult reference;
    DecodeResult scheduled;
    Report report;
};

PairedRun run_paired_decode(const Model& model, const Schedule& schedule, const std::vector<TokenId>& prompt,
                            std::size_t m, const DecodeResult* reference = nullptr);

// Outcome of one subcommand: human-readable summary plus written artifacts.
struct CommandResult {
    std::string summary;
    std::vector<std::filesystem::path> artifacts;
};

CommandResult cmd_profile(const RunConfig& config);
CommandResult cmd_calibrate(const RunConfig& config);
CommandResult cmd_decode(const RunConfig& config);
CommandResult cmd_sweep(const RunConfig& config);
CommandResult cmd_cost(const RunConfig& config);

// Dispatch by name: profile, calibrate, decode, sweep, cost.
CommandResult run_command(const std::string& name, const RunConfig& config);

// 0 success, 1 usage/config, 2 I/O, 3 numeric failure.
int exit_code_for(ErrorCode code) noexcept;

// Analytic sweep row columns shared by cmd_sweep.
std::vector<std::string> sweep_csv_header();

}  // namespace loradrop
