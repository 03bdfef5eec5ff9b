// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "loradrop/scheduler.hpp"

namespace loradrop {

// Per-layer decode cost c_full(L) = A d^2 + B d L; the surrogate costs 2 r d.
struct ComputeParams {
    double A = 1.0;
    double B = 1.0;
    std::size_t d = 1;
    std::size_t r = 1;
    std::size_t n = 1;

    void validate() const;
};

struct KvParams {
    std::size_t L = 1;        // total layers
    std::size_t a = 0;        // always-active layers
    std::size_t h = 1;        // attention heads
    std::size_t h_kv = 1;     // KV heads
    std::size_t d_model = 1;
    std::size_t b = 2;        // bytes per element
    std::size_t batch = 1;
    std::size_t N = 0;        // generated tokens
    double p = 0.0;           // dropped fraction of the skippable layers
    std::size_t w = 1;        // refresh period in tokens (k + 1)

    void validate() const;
    std::size_t skippable() const noexcept { return L - a; }
    // Keys plus values for one token at one layer.
    double bytes_per_token_layer() const noexcept;
};

struct LatencyPair {
    double tau_ref = 0.0;
    double tau_lora = 0.0;

    void validate() const;
};

double c_full(const ComputeParams& cp, double cache_length);
double c_lora(const ComputeParams& cp);
double gamma(const ComputeParams& cp, double cache_length);
// The bracket (1 - rho) + rho/(k+1) + rho k/(k+1) gamma shared by c_avg and speedup.
double cycle_fraction(double rho, std::size_t k, double gamma_value);
double c_avg(const ComputeParams& cp, double rho, std::size_t k, double cache_length);
double speedup(const ComputeParams& cp, double rho, std::size_t k, double cache_length);
double speedup_inf(double rho, std::size_t k);

// tau_ref when 1/(k+1) > 1 - pq, otherwise tau_lora.
double latency_quantile(double pq, std::size_t k, const LatencyPair& lat);
// Inverse-CDF empirical quantile: smallest sample x with F(x) >= pq.
double empirical_quantile(std::vector<double> samples, double pq);

double kv_baseline(const KvParams& kv);
// Dropped layers write on steps {0, w, 2w, ...}: ceil(N / w) entries.
double kv_drop(const KvParams& kv);
double kv_save_percent(std::size_t L, std::size_t a, double p, double w);

struct ComputeFit {
    ComputeParams params;
    double rms_residual = 0.0;
    std::size_t samples = 0;
};

// Least-squares (A, B) from (cache length, MACs) samples of full layer calls.
ComputeFit fit_compute_params(const std::vector<std::pair<double, double>>& samples, std::size_t d, std::size_t r,
                              std::size_t n);
// Samples every Full cell of the stats.
ComputeFit fit_compute_params(const DecodeStats& stats, std::size_t d, std::size_t r);

}  // namespace loradrop
