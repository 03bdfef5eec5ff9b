// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

// Naive whole-sequence forward in double precision, written from the weights
// alone: no caches, no decode loop. Used as an oracle.

#pragma once

#include <cmath>
#include <vector>

#include "loradrop/model.hpp"

namespace loradrop::testing {

using Row = std::vector<double>;

inline Row mv(const Matrix& m, const Row& x) {
    Row y(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) y[r] += static_cast<double>(m(r, c)) * x[c];
    return y;
}

inline Row rms(const Row& x, const Vector& g) {
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + 1e-6);
    Row y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * g[i];
    return y;
}

inline void rope(Row& x, std::size_t heads, std::size_t hd, std::size_t pos) {
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j + 1 < hd; j += 2) {
            const double ang = static_cast<double>(pos) * std::pow(10000.0, -static_cast<double>(j) / hd);
            const double a = x[h * hd + j], b = x[h * hd + j + 1];
            x[h * hd + j] = a * std::cos(ang) - b * std::sin(ang);
            x[h * hd + j + 1] = a * std::sin(ang) + b * std::cos(ang);
        }
}

// Logits at every position of `tokens` under dense causal attention.
inline std::vector<Row> reference_logits(const Model& model, const std::vector<TokenId>& tokens) {
    const ModelSpec& s = model.spec();
    const std::size_t T = tokens.size(), d = s.d_model, hd = s.head_dim();
    std::vector<Row> x(T);
    for (std::size_t t = 0; t < T; ++t) {
        const auto row = model.embedding().row(tokens[t]);
        x[t].assign(row.begin(), row.end());
    }
    for (std::size_t l = 0; l < s.n_layers; ++l) {
        const LayerWeights& w = model.layer(l);
        std::vector<Row> q(T), k(T), v(T);
        for (std::size_t t = 0; t < T; ++t) {
            const Row xn = rms(x[t], w.attn_norm);
            q[t] = mv(w.wq, xn);
            k[t] = mv(w.wk, xn);
            v[t] = mv(w.wv, xn);
            rope(q[t], s.n_heads, hd, t);
            rope(k[t], s.n_kv_heads, hd, t);
        }
        std::vector<Row> next(T);
        for (std::size_t t = 0; t < T; ++t) {
            Row attn(d, 0.0);
            for (std::size_t h = 0; h < s.n_heads; ++h) {
                const std::size_t g = h / (s.n_heads / s.n_kv_heads);
                Row sc(t + 1);
                double mx = -1e300;
                for (std::size_t u = 0; u <= t; ++u) {
                    double dotp = 0.0;
                    for (std::size_t c = 0; c < hd; ++c) dotp += q[t][h * hd + c] * k[u][g * hd + c];
                    sc[u] = dotp / std::sqrt(static_cast<double>(hd));
                    mx = std::max(mx, sc[u]);
                }
                double z = 0.0;
                for (double& e : sc) z += (e = std::exp(e - mx));
                for (std::size_t u = 0; u <= t; ++u)
                    for (std::size_t c = 0; c < hd; ++c) attn[h * hd + c] += sc[u] / z * v[u][g * hd + c];
            }
            Row h1 = mv(w.wo, attn);
            for (std::size_t i = 0; i < d; ++i) h1[i] += x[t][i];
            Row up = mv(w.w_up, rms(h1, w.mlp_norm));
            for (double& a : up) a = a / (1.0 + std::exp(-a));
            Row out = mv(w.w_down, up);
            for (std::size_t i = 0; i < d; ++i) out[i] += h1[i];
            next[t] = std::move(out);
        }
        x = std::move(next);
    }
    std::vector<Row> logits(T);
    for (std::size_t t = 0; t < T; ++t) logits[t] = mv(model.lm_head(), rms(x[t], model.final_norm()));
    return logits;
}

}  // namespace loradrop::testing
