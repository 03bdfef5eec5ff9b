// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#include "loradrop/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace loradrop {

void ComputeParams::validate() const {
    require(A > 0.0 && B > 0.0, ErrorCode::kParameter, "compute params: A and B must be positive");
    require(r >= 1 && r <= d, ErrorCode::kParameter, "compute params: r must lie in [1, d]");
    require(n >= 1, ErrorCode::kParameter, "compute params: n must be positive");
}

void KvParams::validate() const {
    require(a <= L, ErrorCode::kParameter, "kv params: a must not exceed L");
    require(p >= 0.0 && p <= 1.0, ErrorCode::kParameter, "kv params: p must lie in [0, 1]");
    require(w >= 1, ErrorCode::kParameter, "kv params: w must be >= 1");
    require(h >= 1 && h_kv >= 1 && h % h_kv == 0, ErrorCode::kParameter, "kv params: h_kv must divide h");
    require(d_model % h == 0, ErrorCode::kParameter, "kv params: h must divide d_model");
}

double KvParams::bytes_per_token_layer() const noexcept {
    return 2.0 * static_cast<double>(h_kv) * static_cast<double>(d_model / h) * static_cast<double>(b);
}

void LatencyPair::validate() const {
    require(tau_lora > 0.0 && tau_ref >= tau_lora, ErrorCode::kParameter,
            "latency pair: need tau_ref >= tau_lora > 0");
}

double c_full(const ComputeParams& cp, double cache_length) {
    require(cache_length >= 0.0, ErrorCode::kParameter, "c_full: cache length must be >= 0");
    const double d = static_cast<double>(cp.d);
    return cp.A * d * d + cp.B * d * cache_length;
}

double c_lora(const ComputeParams& cp) { return 2.0 * static_cast<double>(cp.r) * static_cast<double>(cp.d); }

double gamma(const ComputeParams& cp, double cache_length) { return c_lora(cp) / c_full(cp, cache_length); }

double cycle_fraction(double rho, std::size_t k, double gamma_value) {
    require(rho >= 0.0 && rho <= 1.0, ErrorCode::kParameter, "rho must lie in [0, 1]");
    const double period = static_cast<double>(k) + 1.0;
    return (1.0 - rho) + rho / period + rho * static_cast<double>(k) / period * gamma_value;
}

double c_avg(const ComputeParams& cp, double rho, std::size_t k, double cache_length) {
    const double full = c_full(cp, cache_length);
    return static_cast<double>(cp.n) * full * cycle_fraction(rho, k, c_lora(cp) / full);
}

double speedup(const ComputeParams& cp, double rho, std::size_t k, double cache_length) {
    return 1.0 / cycle_fraction(rho, k, gamma(cp, cache_length));
}

double speedup_inf(double rho, std::size_t k) {
    require(rho >= 0.0 && rho <= 1.0, ErrorCode::kParameter, "rho must lie in [0, 1]");
    const double period = static_cast<double>(k) + 1.0;
    return period / (period - rho * static_cast<double>(k));
}

double latency_quantile(double pq, std::size_t k, const LatencyPair& lat) {
    require(pq > 0.0 && pq < 1.0, ErrorCode::kParameter, "latency_quantile: pq must lie in (0, 1)");
    return 1.0 / (static_cast<double>(k) + 1.0) > 1.0 - pq ? lat.tau_ref : lat.tau_lora;
}

double empirical_quantile(std::vector<double> samples, double pq) {
    require(!samples.empty(), ErrorCode::kInput, "empirical_quantile: no samples");
    require(pq > 0.0 && pq < 1.0, ErrorCode::kParameter, "empirical_quantile: pq must lie in (0, 1)");
    std::sort(samples.begin(), samples.end());
    // Rank computed in integers where possible so 0.95 * 10000 lands on 9500.
    const double exact = pq * static_cast<double>(samples.size());
    auto rank = static_cast<std::size_t>(std::ceil(exact - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, samples.size());
    return samples[rank - 1];
}

double kv_baseline(const KvParams& kv) {
    kv.validate();
    return static_cast<double>(kv.batch) * static_cast<double>(kv.N) * static_cast<double>(kv.L) *
           kv.bytes_per_token_layer();
}

double kv_drop(const KvParams& kv) {
    kv.validate();
    const double N = static_cast<double>(kv.N);
    const double S = static_cast<double>(kv.skippable());
    const double refresh_writes = static_cast<double>((kv.N + kv.w - 1) / kv.w);
    const double layer_tokens =
        static_cast<double>(kv.a) * N + (1.0 - kv.p) * S * N + kv.p * S * refresh_writes;
    return static_cast<double>(kv.batch) * kv.bytes_per_token_layer() * layer_tokens;
}

double kv_save_percent(std::size_t L, std::size_t a, double p, double w) {
    require(L >= 1 && a <= L, ErrorCode::kParameter, "kv_save_percent: need 0 <= a <= L, L >= 1");
    require(p >= 0.0 && p <= 1.0, ErrorCode::kParameter, "kv_save_percent: p must lie in [0, 1]");
    require(w >= 1.0, ErrorCode::kParameter, "kv_save_percent: w must be >= 1");
    return 100.0 * (1.0 - static_cast<double>(a) / static_cast<double>(L)) * p * (1.0 - 1.0 / w);
}

ComputeFit fit_compute_params(const std::vector<std::pair<double, double>>& samples, std::size_t d, std::size_t r,
                              std::size_t n) {
    std::set<double> lengths;
    for (const auto& s : samples) lengths.insert(s.first);
    require(lengths.size() >= 2, ErrorCode::kRankDeficient,
            "fit_compute_params: need samples at >= 2 distinct cache lengths");

    // macs = A * d^2 + B * d * L: regress on x1 = d^2 and x2 = d * L. Centering
    // on L keeps the 2x2 system well conditioned.
    const double dd = static_cast<double>(d);
    double mean_l = 0.0;
    double mean_y = 0.0;
    for (const auto& [l, y] : samples) {
        mean_l += l;
        mean_y += y;
    }
    mean_l /= static_cast<double>(samples.size());
    mean_y /= static_cast<double>(samples.size());
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& [l, y] : samples) {
        sxx += (l - mean_l) * (l - mean_l);
        sxy += (l - mean_l) * (y - mean_y);
    }
    const double slope = sxy / sxx;  // = B d
    const double intercept = mean_y - slope * mean_l;  // = A d^2

    ComputeFit fit;
    fit.params = ComputeParams{intercept / (dd * dd), slope / dd, d, r, n};
    fit.samples = samples.size();
    double ss = 0.0;
    for (const auto& [l, y] : samples) {
        const double e = y - (intercept + slope * l);
        ss += e * e;
    }
    fit.rms_residual = std::sqrt(ss / static_cast<double>(samples.size()));
    return fit;
}

ComputeFit fit_compute_params(const DecodeStats& stats, std::size_t d, std::size_t r) {
    std::vector<std::pair<double, double>> samples;
    for (std::size_t t = 0; t < stats.steps; ++t)
        for (std::size_t i = 0; i < stats.n_layers; ++i)
            if (stats.mode(t, i) == StepMode::Full)
                samples.emplace_back(static_cast<double>(stats.cache_len_before[t * stats.n_layers + i]),
                                     static_cast<double>(stats.macs(t, i)));
    return fit_compute_params(samples, d, r, stats.n_layers);
}

}  // namespace loradrop
