// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "loradrop/costmodel.hpp"
#include "loradrop/harness.hpp"
#include "loradrop/io_util.hpp"
#include "loradrop/profiler.hpp"
#include "loradrop/scheduler.hpp"
#include "reference_model.hpp"
#include "support.hpp"

using namespace loradrop;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && first_failure_.empty()) first_failure_ = what;
        pass_ = pass_ && ok;
    }
    void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
    Outcome done() const { return {pass_, pass_ ? notes_ : first_failure_ + (notes_.empty() ? "" : " | " + notes_)}; }

private:
    bool pass_ = true;
    std::string first_failure_;
    std::string notes_;
};

std::string num(double v, const char* f = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Schedule make_schedule(std::set<std::size_t> drop, std::size_t k) {
    Schedule s;
    s.drop_set = std::move(drop);
    s.k = k;
    return s;
}

std::vector<TokenId> toy_prompt(std::size_t length, std::size_t vocab, std::uint64_t seed) {
    return synthetic_corpus(1, length, vocab, 0.5, seed).front();
}

// Profile-derived drop list on the toy model, as the pipeline would build it.
RedundancyProfile toy_profile(const Model& model) {
    const Corpus corpus = synthetic_corpus(8, 32, model.spec().vocab_size, 0.5, 77);
    return measure_similarity(collect_traces(model, corpus, "acceptance", 4), 8);
}

// 1. Baseline equivalence against a from-scratch greedy reference.
Outcome baseline_equivalence() {
    Check c;
    const Model model{ModelSpec{}};
    const std::vector<TokenId> prompt = toy_prompt(16, model.spec().vocab_size, 1);
    const std::size_t m = 64;

    const auto started = std::chrono::steady_clock::now();
    const DecodeResult empty = decode(model, make_schedule({}, 3), prompt, m);
    const DecodeResult k0 = decode(model, make_schedule({3, 4, 5, 6}, 0), prompt, m);
    const double decode_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    // Reference: re-run the whole sequence through prefill at every step.
    std::vector<TokenId> seq = prompt;
    std::vector<TokenId> ref_tokens;
    std::vector<Vector> ref_logits;
    TokenId next = argmax(prefill(model, seq, nullptr).logits.span());
    for (std::size_t t = 0; t < m; ++t) {
        ref_tokens.push_back(next);
        seq.push_back(next);
        ref_logits.push_back(prefill(model, seq, nullptr).logits);
        next = argmax(ref_logits.back().span());
    }
    const double total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    for (const auto* run : {&empty, &k0}) {
        const char* name = run == &empty ? "empty drop set" : "k=0";
        c.expect(run->tokens == ref_tokens, std::string(name) + ": greedy tokens differ");
        const DriftMetrics d = compare_logits(ref_logits, run->logits);
        c.expect(d.max_rel_logit_dev < 1e-5, std::string(name) + ": relative logit deviation " + num(d.max_rel_logit_dev));
        c.note(std::string(name) + " max rel dev " + num(d.max_rel_logit_dev));
    }
    // Independent double-precision forward over the final sequence.
    const auto naive = loradrop::testing::reference_logits(model, seq);
    double naive_dev = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        double diff = 0.0, scale = 0.0;
        for (std::size_t v = 0; v < naive[t].size(); ++v) {
            diff = std::max(diff, std::abs(static_cast<double>(empty.logits[t][v]) - naive[prompt.size() + t][v]));
            scale = std::max(scale, std::abs(naive[prompt.size() + t][v]));
        }
        naive_dev = std::max(naive_dev, diff / scale);
    }
    c.expect(naive_dev < 1e-4, "deviation from naive double forward " + num(naive_dev));
    c.note("vs naive double forward " + num(naive_dev, "%.2e"));
    c.expect(total_seconds < 10.0, "runtime " + num(total_seconds) + " s");
    c.note("decode " + num(decode_seconds, "%.3f") + " s, with oracle " + num(total_seconds, "%.2f") + " s");
    return c.done();
}

// 2. Long-context speedup values.
Outcome long_context_speedup() {
    Check c;
    const double a = speedup_inf(0.5, 3);
    const double b = speedup_inf(0.75, 5);
    c.expect(a == 1.6, "speedup_inf(0.5, 3) = " + num(a, "%.10f"));
    c.expect(std::abs(b - 2.6667) <= 1e-4, "speedup_inf(0.75, 5) = " + num(b, "%.10f"));
    c.note("S_inf(0.5,3)=" + num(a, "%.4f") + ", S_inf(0.75,5)=" + num(b, "%.4f"));
    return c.done();
}

// 3. KV closed form against the scheduler's real cache.
Outcome kv_closed_form() {
    Check c;
    const auto started = std::chrono::steady_clock::now();
    const Model model{ModelSpec{}};
    const ModelSpec& spec = model.spec();
    const std::set<std::size_t> drop = build_drop_list(toy_profile(model), 0.5, 3, 1);
    const Schedule s = make_schedule(drop, 3);
    const std::vector<TokenId> prompt = toy_prompt(16, spec.vocab_size, 3);
    const std::size_t N = 64;
    const DecodeResult r = decode(model, s, prompt, N);

    KvParams kv;
    kv.L = 8;
    kv.a = 4;
    kv.h = spec.n_heads;
    kv.h_kv = spec.n_kv_heads;
    kv.d_model = spec.d_model;
    kv.b = sizeof(Real);
    kv.N = N;
    kv.p = 0.5;
    kv.w = 4;
    const double per_entry = kv.bytes_per_token_layer();
    double counted = 0.0;
    for (std::size_t l = 0; l < 8; ++l) counted += static_cast<double>(r.stats.decode_entries(l)) * per_entry;
    const double held = static_cast<double>(r.cache.bytes()) - static_cast<double>(prompt.size() * 8) * per_entry;
    c.expect(drop.size() == 2, "drop list size " + std::to_string(drop.size()));
    c.expect(counted == kv_drop(kv), "entry bytes " + num(counted) + " vs kv_drop " + num(kv_drop(kv)));
    c.expect(held == kv_drop(kv), "cache bytes " + num(held) + " vs kv_drop " + num(kv_drop(kv)));
    c.note("N=64 bytes " + num(counted) + " = kv_drop");

    const double target = kv_save_percent(8, 4, 0.5, 4) / 100.0;
    double worst = 0.0;
    Schedule sim = s;
    for (std::size_t n : {64, 65, 100, 257, 1000, 1023, 2048, 4095, 4096}) {
        const auto writes = simulate_cache_writes(sim, 8, n);
        double total = 0.0;
        for (std::size_t w : writes) total += static_cast<double>(w);
        const double saving = 1.0 - total / (8.0 * static_cast<double>(n));
        const double gap = std::abs(saving - target);
        c.expect(gap <= 1.0 / static_cast<double>(n), "N=" + std::to_string(n) + " saving gap " + num(gap));
        kv.N = n;
        c.expect(total * per_entry == kv_drop(kv), "N=" + std::to_string(n) + " simulated bytes differ from kv_drop");
        worst = std::max(worst, gap * static_cast<double>(n));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    c.expect(seconds < 5.0, "runtime " + num(seconds) + " s");
    c.note("max N*|gap| " + num(worst, "%.4f") + " over N in [64, 4096], " + num(seconds, "%.2f") + " s");
    return c.done();
}

// 4. Instrumented MACs against the fitted analytic model.
Outcome instrumented_vs_analytic() {
    Check c;
    const auto started = std::chrono::steady_clock::now();
    const Model model{ModelSpec{}};
    const RedundancyProfile profile = toy_profile(model);
    const std::vector<TokenId> prompt = toy_prompt(64, model.spec().vocab_size, 4);
    const std::size_t m = 64;
    const DecodeResult reference = decode(model, Schedule{}, prompt, m);
    double worst_speed = 0.0, worst_cycle = 0.0;
    for (double p : {0.25, 0.5, 0.75})
        for (std::size_t k : {1, 2, 3, 5}) {
            const Schedule s = make_schedule(build_drop_list(profile, p, 3, 1), k);
            const Report r = run_paired_decode(model, s, prompt, m, &reference).report;
            const double cycle_gap = std::abs(r.measured_cycle_macs - r.predicted_cycle_macs) / r.predicted_cycle_macs;
            const std::string cell = "p=" + num(p) + ",k=" + std::to_string(k);
            c.expect(cycle_gap < 0.01, cell + ": cycle MAC gap " + num(cycle_gap));
            c.expect(r.speedup_rel_error < 0.02, cell + ": speedup gap " + num(r.speedup_rel_error) + " (measured " +
                                                     num(r.measured_speedup) + ", predicted " +
                                                     num(r.predicted_speedup) + ")");
            worst_speed = std::max(worst_speed, r.speedup_rel_error);
            worst_cycle = std::max(worst_cycle, cycle_gap);
        }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    c.expect(seconds < 60.0, "runtime " + num(seconds) + " s");
    c.note("worst speedup gap " + num(100 * worst_speed, "%.3f") + "%, worst cycle gap " +
           num(100 * worst_cycle, "%.3f") + "%, " + num(seconds, "%.2f") + " s");
    return c.done();
}

// 5. Empirical p95 of synthetic latencies against the step function.
Outcome latency_quantile_switch() {
    Check c;
    const LatencyPair lat{2e-3, 1e-3};
    for (std::size_t k : {3, 18, 19, 25}) {
        const Schedule s = make_schedule({3}, k);
        std::vector<double> samples;
        for (std::size_t t = 0; t < 10000; ++t) samples.push_back(s.is_refresh(t) ? lat.tau_ref : lat.tau_lora);
        const double emp = empirical_quantile(samples, 0.95);
        const double want = latency_quantile(0.95, k, lat);
        c.expect(emp == want, "k=" + std::to_string(k) + ": empirical " + num(emp) + " vs " + num(want));
        c.note("k=" + std::to_string(k) + " -> " + (emp == lat.tau_ref ? "tau_ref" : "tau_lora"));
    }
    c.expect(latency_quantile(0.95, 18, lat) == lat.tau_ref && latency_quantile(0.95, 19, lat) == lat.tau_lora,
             "switch not between k=18 and k=19");
    return c.done();
}

// 6. Profiler against AR(1) traces.
Outcome profiler_oracle() {
    Check c;
    const auto started = std::chrono::steady_clock::now();
    const double phi = 0.9;
    const std::size_t T = 10000, d = 32, layers = 4;
    Rng rng(606);
    ActivationTrace trace;
    trace.embedding.assign(T, Vector(d, 1.0f));
    trace.layers.resize(layers);
    const double noise = std::sqrt(1.0 - phi * phi);
    for (auto& seq : trace.layers) {
        Vector h(d);
        for (std::size_t i = 0; i < d; ++i) h[i] = static_cast<Real>(rng.normal());
        for (std::size_t t = 0; t < T; ++t) {
            seq.push_back(h);
            for (std::size_t i = 0; i < d; ++i) h[i] = static_cast<Real>(phi * h[i] + noise * rng.normal());
        }
    }
    const RedundancyProfile p = measure_similarity({trace}, 10);
    const std::vector<double> curve = p.layer_mean_curve();
    double worst = 0.0;
    for (std::size_t delta = 1; delta <= 5; ++delta) {
        const double gap = std::abs(curve[delta - 1] - std::pow(phi, static_cast<double>(delta)));
        c.expect(gap < 0.05, "delta=" + std::to_string(delta) + " gap " + num(gap));
        worst = std::max(worst, gap);
    }
    const std::size_t horizon = similarity_horizon(p, 0.5);
    const auto expected = static_cast<long>(std::floor(std::log(0.5) / std::log(phi)));
    c.expect(std::labs(static_cast<long>(horizon) - expected) <= 1,
             "horizon " + std::to_string(horizon) + " vs " + std::to_string(expected));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    c.expect(seconds < 10.0, "runtime " + num(seconds) + " s");
    c.note("max |sim - phi^d| " + num(worst, "%.4f") + ", horizon " + std::to_string(horizon) + " (expected " +
           std::to_string(expected) + "), " + num(seconds, "%.2f") + " s");
    return c.done();
}

// Solves M x = b by Gaussian elimination with partial pivoting.
std::vector<double> gauss_solve(std::vector<double> M, std::vector<double> b, std::size_t n) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(M[r * n + col]) > std::abs(M[piv * n + col])) piv = r;
        for (std::size_t j = 0; j < n; ++j) std::swap(M[col * n + j], M[piv * n + j]);
        std::swap(b[col], b[piv]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = M[r * n + col] / M[col * n + col];
            for (std::size_t j = col; j < n; ++j) M[r * n + j] -= f * M[col * n + j];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double v = b[i];
        for (std::size_t j = i + 1; j < n; ++j) v -= M[i * n + j] * x[j];
        x[i] = v / M[i * n + i];
    }
    return x;
}

// 7. Calibration optimality on a 4-dim layer.
Outcome calibration_optimality() {
    Check c;
    ModelSpec spec;
    spec.n_layers = 5;
    spec.d_model = 4;
    spec.n_heads = 2;
    spec.n_kv_heads = 1;
    spec.d_ff = 8;
    spec.vocab_size = 16;
    spec.lora_rank = 4;
    spec.lora_alpha = 1.0;
    spec.seed = 70;
    const Model model(spec);
    const std::size_t layer = 3, d = 4;
    const TraceSet traces = collect_traces(model, synthetic_corpus(8, 32, 16, 0.5, 71), "toy4");

    // Brute-force normal equations: for each output row i, (alpha^2 G) w_i = alpha C_i.
    const double alpha = spec.lora_alpha;
    std::vector<double> G(d * d, 0.0), C(d * d, 0.0);
    for (const auto& tr : traces)
        for (std::size_t t = 1; t < tr.length(); ++t) {
            const Vector& u = tr.layer_input(layer, t);
            for (std::size_t i = 0; i < d; ++i) {
                const double D = static_cast<double>(tr.layers[layer][t][i]) - tr.layers[layer][t - 1][i];
                for (std::size_t j = 0; j < d; ++j) {
                    G[i * d + j] += static_cast<double>(u[i]) * u[j];
                    C[i * d + j] += D * u[j];
                }
            }
        }
    std::vector<double> W(d * d);
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<double> M(d * d), rhs(d);
        for (std::size_t j = 0; j < d * d; ++j) M[j] = alpha * alpha * G[j];
        for (std::size_t j = 0; j < d; ++j) rhs[j] = alpha * C[i * d + j];
        const auto row = gauss_solve(M, rhs, d);
        for (std::size_t j = 0; j < d; ++j) W[i * d + j] = row[j];
    }
    // Residual of x_t against x_{t-1} + alpha W u_t over the training traces.
    auto residual = [&](const std::function<double(std::size_t, const Vector&, std::size_t)>& predict_delta) {
        double sum = 0.0;
        for (const auto& tr : traces)
            for (std::size_t t = 1; t < tr.length(); ++t) {
                const Vector& u = tr.layer_input(layer, t);
                for (std::size_t i = 0; i < d; ++i) {
                    const double D = static_cast<double>(tr.layers[layer][t][i]) - tr.layers[layer][t - 1][i];
                    const double e = D - predict_delta(i, u, t);
                    sum += e * e;
                }
            }
        return sum;
    };
    const double brute = residual([&](std::size_t i, const Vector& u, std::size_t) {
        double v = 0.0;
        for (std::size_t j = 0; j < d; ++j) v += W[i * d + j] * u[j];
        return alpha * v;
    });
    auto adapter_residual = [&](const LoraAdapter& a) {
        return residual([&](std::size_t i, const Vector& u, std::size_t) {
            double v = 0.0;
            for (std::size_t q = 0; q < a.rank(); ++q) {
                double au = 0.0;
                for (std::size_t j = 0; j < d; ++j) au += static_cast<double>(a.A(q, j)) * u[j];
                v += static_cast<double>(a.B(i, q)) * au;
            }
            return a.alpha * v;
        });
    };
    const double reuse = residual([](std::size_t, const Vector&, std::size_t) { return 0.0; });

    const CalibrationResult full = calibrate_lora(traces, model, layer, d, 0.0);
    const double got = adapter_residual(full.adapter);
    const double rel = std::abs(got - brute) / brute;
    c.expect(rel < 1e-5, "r=d residual " + num(got) + " vs brute force " + num(brute));

    double prev = 0.0;
    std::string curve;
    for (std::size_t r = 1; r <= d; ++r) {
        const CalibrationResult res = calibrate_lora(traces, model, layer, r, 0.0);
        const double e = adapter_residual(res.adapter);
        if (r > 1) c.expect(e <= prev * (1.0 + 1e-9), "residual rises from r=" + std::to_string(r - 1));
        c.expect(e <= reuse, "r=" + std::to_string(r) + " worse than reuse");
        // Reconstruction through the surrogate update itself.
        double recon = 0.0;
        for (const auto& tr : traces)
            for (std::size_t t = 1; t < tr.length(); ++t) {
                const Vector x = lora_layer_update(res.adapter, tr.layers[layer][t - 1], tr.layer_input(layer, t), nullptr);
                for (std::size_t i = 0; i < d; ++i) {
                    const double diff = static_cast<double>(x[i]) - tr.layers[layer][t][i];
                    recon += diff * diff;
                }
            }
        c.expect(recon <= reuse * (1.0 + 1e-6), "r=" + std::to_string(r) + " reconstruction above reuse");
        curve += (curve.empty() ? "" : ", ") + num(e, "%.5g");
        prev = e;
    }
    double w_norm = 0.0;
    for (double v : W) w_norm += v * v;
    c.expect(w_norm == 0.0 || got < reuse, "optimum is nonzero but calibrated error equals reuse");
    c.note("r=d rel gap " + num(rel, "%.2e") + ", residual r=1..4: " + curve + ", reuse " + num(reuse, "%.5g"));
    return c.done();
}

// 8. Scheduler exactness: grid cells and randomized property cases.
Outcome scheduler_exactness() {
    Check c;
    const Model model{ModelSpec{}};
    const RedundancyProfile profile = toy_profile(model);
    const std::vector<TokenId> prompt = toy_prompt(8, model.spec().vocab_size, 8);
    const std::size_t m = 40;
    for (double p : {0.25, 0.5, 0.75})
        for (std::size_t k : {1, 2, 3, 5}) {
            const Schedule s = make_schedule(build_drop_list(profile, p, 3, 1), k);
            const DecodeResult r = decode(model, s, prompt, m);
            const std::size_t want = (m + k) / (k + 1);
            const std::string cell = "p=" + num(p) + ",k=" + std::to_string(k);
            for (std::size_t l : s.drop_set)
                c.expect(r.stats.decode_entries(l) == want, cell + ": layer " + std::to_string(l) + " has " +
                                                                std::to_string(r.stats.decode_entries(l)) + " entries");
            c.expect(r.stats.all_full_steps() == want, cell + ": all-full steps " + std::to_string(r.stats.all_full_steps()));
        }

    std::map<std::size_t, Model> models;
    Rng rng(8080);
    std::size_t cases = 0;
    for (; cases < 1000; ++cases) {
        const std::size_t n = 5 + rng.below(8);
        const std::size_t k = rng.below(8);
        const std::size_t steps = 1 + rng.below(24);
        std::set<std::size_t> drop;
        for (std::size_t l = 3; l + 1 < n; ++l)
            if (rng.uniform() < 0.5) drop.insert(l);
        auto it = models.find(n);
        if (it == models.end()) {
            ModelSpec spec;
            spec.n_layers = n;
            spec.d_model = 8;
            spec.n_heads = 2;
            spec.n_kv_heads = 1;
            spec.d_ff = 16;
            spec.vocab_size = 16;
            spec.lora_rank = 2;
            spec.seed = n;
            it = models.emplace(n, Model(spec)).first;
        }
        const std::size_t T = 1 + rng.below(4);
        std::vector<TokenId> pr;
        for (std::size_t i = 0; i < T; ++i) pr.push_back(static_cast<TokenId>(rng.below(16)));
        const DecodeResult r = decode(it->second, make_schedule(drop, k), pr, steps);
        bool ok = true;
        for (std::size_t t = 0; t < steps && ok; ++t) {
            const bool refresh = t % (k + 1) == 0;
            ok = ok && r.stats.refresh[t] == (refresh ? 1 : 0);
            for (std::size_t l = 0; l < n && ok; ++l) {
                const StepMode want = (refresh || drop.count(l) == 0) ? StepMode::Full : StepMode::Lora;
                ok = r.stats.mode(t, l) == want;
                if (want == StepMode::Lora) ok = ok && r.stats.macs(t, l) == 2 * 2 * 8;
            }
        }
        for (std::size_t l = 0; l < n && ok; ++l) {
            std::vector<std::size_t> pos;
            for (std::size_t i = 0; i < T; ++i) pos.push_back(i);
            for (std::size_t t = 0; t < steps; ++t)
                if (drop.count(l) == 0 || t % (k + 1) == 0) pos.push_back(T + t);
            ok = r.cache.positions(l) == pos;
        }
        if (!ok) {
            c.expect(false, "property case " + std::to_string(cases) + " (n=" + std::to_string(n) +
                                ", k=" + std::to_string(k) + ", m=" + std::to_string(steps) + ")");
            break;
        }
    }
    c.note("12 grid cells at m=40, " + std::to_string(cases) + " randomized cases");
    return c.done();
}

// 9. Sweep determinism.
Outcome sweep_determinism() {
    Check c;
    loradrop::testing::ScratchDir dir("acceptance-sweep");
    const RunConfig config = RunConfig::from_json({{"seed", 99}, {"threads", 4}, {"output_dir", dir.path().string()},
                                                   {"decode", {{"m", 32}}}});
    cmd_sweep(config);
    const std::string first = read_file(dir / "sweep.csv");
    cmd_sweep(config);
    const std::string second = read_file(dir / "sweep.csv");
    c.expect(first == second, "sweep CSVs differ");
    std::size_t lines = 0;
    for (char ch : first) lines += ch == '\n';
    c.expect(lines == 18, "sweep has " + std::to_string(lines) + " lines");
    c.note(std::to_string(first.size()) + " bytes, " + std::to_string(lines - 1) + " rows, identical");
    return c.done();
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"baseline equivalence", baseline_equivalence},
        {"long-context speedup formula", long_context_speedup},
        {"KV closed form vs simulation", kv_closed_form},
        {"instrumented vs analytic compute", instrumented_vs_analytic},
        {"latency quantile step function", latency_quantile_switch},
        {"redundancy profiler oracle", profiler_oracle},
        {"calibration optimality", calibration_optimality},
        {"scheduler exactness", scheduler_exactness},
        {"sweep determinism", sweep_determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
