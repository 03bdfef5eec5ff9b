// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#include "loradrop/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "loradrop/io_util.hpp"
#include "loradrop/tensor_file.hpp"

namespace loradrop {

const Vector& ActivationTrace::layer_input(std::size_t layer, std::size_t t) const {
    return layer == 0 ? embedding.at(t) : layers.at(layer - 1).at(t);
}

TraceSet collect_traces(const Model& model, const Corpus& corpus, const std::string& corpus_id, unsigned threads) {
    require(!corpus.empty(), ErrorCode::kInput, "collect_traces: empty corpus");
    for (const auto& seq : corpus)
        require(seq.size() >= 2, ErrorCode::kInput, "collect_traces: every sequence needs at least 2 tokens");

    const std::size_t n = model.spec().n_layers;
    TraceSet traces(corpus.size());
    auto run_one = [&](std::size_t s) {
        ActivationTrace& tr = traces[s];
        tr.corpus_id = corpus_id;
        tr.seed = model.spec().seed;
        tr.embedding.resize(corpus[s].size());
        tr.layers.assign(n, std::vector<Vector>(corpus[s].size()));
        prefill(model, corpus[s], nullptr, [&](std::size_t pos, int layer, const Vector& h) {
            if (layer < 0)
                tr.embedding[pos] = h;
            else
                tr.layers[static_cast<std::size_t>(layer)][pos] = h;
        });
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(corpus.size())));
    if (workers == 1) {
        for (std::size_t s = 0; s < corpus.size(); ++s) run_one(s);
        return traces;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t s = w; s < corpus.size(); s += workers) run_one(s);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return traces;
}

void save_traces(const TraceSet& traces, const std::filesystem::path& path) {
    TensorFile f;
    f.meta["kind"] = "traces";
    f.meta["sequences"] = traces.size();
    f.meta["n_layers"] = traces.empty() ? 0 : traces.front().n_layers();
    nlohmann::json ids = nlohmann::json::array();
    nlohmann::json seeds = nlohmann::json::array();
    auto stack = [](const std::vector<Vector>& rows) {
        const std::size_t d = rows.empty() ? 0 : rows.front().dim();
        Tensor t{"", {rows.size(), d}, {}};
        t.data.reserve(rows.size() * d);
        for (const Vector& v : rows) t.data.insert(t.data.end(), v.values().begin(), v.values().end());
        return t;
    };
    for (std::size_t s = 0; s < traces.size(); ++s) {
        const ActivationTrace& tr = traces[s];
        ids.push_back(tr.corpus_id);
        seeds.push_back(tr.seed);
        Tensor e = stack(tr.embedding);
        e.name = "trace." + std::to_string(s) + ".embedding";
        f.add(std::move(e));
        for (std::size_t l = 0; l < tr.n_layers(); ++l) {
            Tensor t = stack(tr.layers[l]);
            t.name = "trace." + std::to_string(s) + ".layer." + std::to_string(l);
            f.add(std::move(t));
        }
    }
    f.meta["corpus_id"] = ids;
    f.meta["seed"] = seeds;
    f.save(path);
}

TraceSet load_traces(const std::filesystem::path& path) {
    const TensorFile f = TensorFile::load(path);
    require(f.meta.value("kind", "") == "traces", ErrorCode::kInput, "container does not hold traces");
    const auto sequences = f.meta.at("sequences").get<std::size_t>();
    const auto n_layers = f.meta.at("n_layers").get<std::size_t>();
    auto unstack = [](const Matrix& m) {
        std::vector<Vector> rows;
        for (std::size_t r = 0; r < m.rows(); ++r) rows.emplace_back(std::vector<Real>(m.row(r).begin(), m.row(r).end()));
        return rows;
    };
    TraceSet traces(sequences);
    for (std::size_t s = 0; s < sequences; ++s) {
        ActivationTrace& tr = traces[s];
        tr.corpus_id = f.meta.at("corpus_id").at(s).get<std::string>();
        tr.seed = f.meta.at("seed").at(s).get<std::uint64_t>();
        tr.embedding = unstack(f.matrix("trace." + std::to_string(s) + ".embedding"));
        for (std::size_t l = 0; l < n_layers; ++l)
            tr.layers.push_back(unstack(f.matrix("trace." + std::to_string(s) + ".layer." + std::to_string(l))));
    }
    return traces;
}

std::vector<double> RedundancyProfile::layer_mean_curve() const {
    std::vector<double> curve(delta_max, 0.0);
    if (n_layers == 0) return curve;
    for (std::size_t dlt = 1; dlt <= delta_max; ++dlt) {
        double s = 0.0;
        for (std::size_t l = 0; l < n_layers; ++l) s += mean_sim(l, dlt);
        curve[dlt - 1] = s / static_cast<double>(n_layers);
    }
    return curve;
}

std::string RedundancyProfile::to_csv() const {
    CsvWriter csv({"layer", "delta", "mean_sim", "pairs"});
    for (std::size_t l = 0; l < n_layers; ++l)
        for (std::size_t dlt = 1; dlt <= delta_max; ++dlt)
            csv.add_row({std::to_string(l), std::to_string(dlt), format_real(mean_sim(l, dlt)),
                         std::to_string(pair_count(l, dlt))});
    return csv.str();
}

RedundancyProfile measure_similarity(const TraceSet& traces, std::size_t delta_max,
                                     std::vector<std::size_t> score_deltas) {
    require(!traces.empty(), ErrorCode::kInput, "measure_similarity: no traces");
    require(delta_max >= 1, ErrorCode::kParameter, "measure_similarity: delta_max must be >= 1");
    const std::size_t n = traces.front().n_layers();
    std::size_t min_len = traces.front().length();
    for (const auto& tr : traces) {
        require(tr.n_layers() == n, ErrorCode::kInput, "measure_similarity: traces disagree on layer count");
        min_len = std::min(min_len, tr.length());
    }
    require(delta_max < min_len, ErrorCode::kParameter,
            "measure_similarity: delta_max " + std::to_string(delta_max) + " must be < shortest sequence length " +
                std::to_string(min_len));

    RedundancyProfile p;
    p.n_layers = n;
    p.delta_max = delta_max;
    std::vector<double> sums(n * delta_max, 0.0);
    p.pairs.assign(n * delta_max, 0);

    std::vector<double> partial(n * delta_max);
    for (const ActivationTrace& tr : traces) {
        std::fill(partial.begin(), partial.end(), 0.0);
        const std::size_t T = tr.length();
        for (std::size_t l = 0; l < n; ++l) {
            const auto& seq = tr.layers[l];
            std::vector<std::vector<Real>> unit(T);
            for (std::size_t t = 0; t < T; ++t) {
                const double norm = l2_norm(seq[t].span());
                unit[t].resize(seq[t].dim());
                for (std::size_t c = 0; c < seq[t].dim(); ++c)
                    unit[t][c] = norm > 0.0 ? static_cast<Real>(seq[t][c] / norm) : Real(0);
            }
            for (std::size_t dlt = 1; dlt <= delta_max; ++dlt) {
                double s = 0.0;
                for (std::size_t t = 0; t + dlt < T; ++t) s += cosine(unit[t], unit[t + dlt]);
                partial[l * delta_max + dlt - 1] = s;
                p.pairs[l * delta_max + dlt - 1] += T - dlt;
            }
        }
        for (std::size_t i = 0; i < sums.size(); ++i) sums[i] += partial[i];
    }
    p.sim.resize(n * delta_max);
    for (std::size_t i = 0; i < sums.size(); ++i)
        p.sim[i] = std::clamp(sums[i] / static_cast<double>(p.pairs[i]), -1.0, 1.0);

    std::sort(score_deltas.begin(), score_deltas.end());
    score_deltas.erase(std::unique(score_deltas.begin(), score_deltas.end()), score_deltas.end());
    std::erase_if(score_deltas, [&](std::size_t dl) { return dl == 0 || dl > delta_max; });
    require(!score_deltas.empty(), ErrorCode::kParameter, "measure_similarity: no usable score deltas");
    p.score_deltas = score_deltas;
    p.score.assign(n, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
        double s = 0.0;
        for (std::size_t dl : score_deltas) s += p.mean_sim(l, dl);
        p.score[l] = s / static_cast<double>(score_deltas.size());
    }
    return p;
}

std::size_t similarity_horizon(const std::vector<double>& curve, double threshold) {
    std::size_t horizon = 0;
    while (horizon < curve.size() && curve[horizon] >= threshold) ++horizon;
    return horizon;
}

std::size_t similarity_horizon(const RedundancyProfile& profile, double threshold) {
    return similarity_horizon(profile.layer_mean_curve(), threshold);
}

std::set<std::size_t> build_drop_list(const std::vector<double>& scores, double p, std::size_t protected_prefix,
                                      std::size_t protected_suffix) {
    require(p >= 0.0 && p <= 1.0, ErrorCode::kParameter, "build_drop_list: p must lie in [0, 1]");
    const std::size_t n = scores.size();
    std::vector<std::size_t> skippable;
    for (std::size_t l = protected_prefix; l + protected_suffix < n; ++l) skippable.push_back(l);
    const std::size_t S = skippable.size();
    // Guard against p*S landing a hair below an integer.
    const auto take = static_cast<std::size_t>(std::floor(p * static_cast<double>(S) + 1e-9));

    std::stable_sort(skippable.begin(), skippable.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return {skippable.begin(), skippable.begin() + static_cast<std::ptrdiff_t>(std::min(take, S))};
}

std::string drop_list_text(const std::set<std::size_t>& drop) {
    std::string out;
    for (std::size_t l : drop) out += std::to_string(l) + "\n";
    return out;
}

std::set<std::size_t> parse_drop_list(const std::string& text) {
    std::set<std::size_t> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(line.substr(first), &used);
        } catch (const std::exception&) {
            fail(ErrorCode::kInput, "drop list: bad line '" + line + "'");
        }
        const auto rest = line.substr(first + used).find_first_not_of(" \t\r");
        require(rest == std::string::npos, ErrorCode::kInput, "drop list: bad line '" + line + "'");
        out.insert(static_cast<std::size_t>(v));
    }
    return out;
}

nlohmann::json drop_list_sidecar(const std::set<std::size_t>& drop, double p, std::size_t n_layers,
                                 std::size_t protected_prefix, std::size_t protected_suffix,
                                 const RedundancyProfile& profile) {
    nlohmann::json j;
    j["p"] = p;
    j["rho"] = n_layers ? static_cast<double>(drop.size()) / static_cast<double>(n_layers) : 0.0;
    j["n_layers"] = n_layers;
    j["protected_prefix"] = protected_prefix;
    j["protected_suffix"] = protected_suffix;
    j["drop_layers"] = std::vector<std::size_t>(drop.begin(), drop.end());
    j["score_deltas"] = profile.score_deltas;
    nlohmann::json table = nlohmann::json::array();
    for (std::size_t l = 0; l < profile.score.size(); ++l)
        table.push_back({{"layer", l}, {"score", profile.score[l]}, {"dropped", drop.count(l) > 0}});
    j["scores"] = table;
    j["horizon"] = similarity_horizon(profile);
    return j;
}

namespace {

struct SurrogateData {
    std::size_t d = 0;
    std::size_t samples = 0;
    std::vector<double> gram;   // sum u u^T, d x d
    std::vector<double> cross;  // sum D u^T, d x d, D = x_t - x_{t-1}
    double target_energy = 0.0; // sum |D|^2
};

SurrogateData accumulate(const TraceSet& traces, std::size_t layer) {
    require(!traces.empty(), ErrorCode::kInput, "calibration: no traces");
    SurrogateData s;
    s.d = traces.front().layers.at(layer).front().dim();
    s.gram.assign(s.d * s.d, 0.0);
    s.cross.assign(s.d * s.d, 0.0);
    std::vector<double> diff(s.d);
    for (const ActivationTrace& tr : traces) {
        require(layer < tr.n_layers(), ErrorCode::kParameter, "calibration: layer out of range for traces");
        for (std::size_t t = 1; t < tr.length(); ++t) {
            const Vector& u = tr.layer_input(layer, t);
            const Vector& cur = tr.layers[layer][t];
            const Vector& prev = tr.layers[layer][t - 1];
            for (std::size_t i = 0; i < s.d; ++i) {
                diff[i] = static_cast<double>(cur[i]) - static_cast<double>(prev[i]);
                s.target_energy += diff[i] * diff[i];
            }
            for (std::size_t i = 0; i < s.d; ++i) {
                for (std::size_t j = 0; j < s.d; ++j) {
                    s.gram[i * s.d + j] += static_cast<double>(u[i]) * u[j];
                    s.cross[i * s.d + j] += diff[i] * u[j];
                }
            }
            ++s.samples;
        }
    }
    require(s.samples > 0, ErrorCode::kInput, "calibration: traces need at least 2 positions");
    return s;
}

std::vector<double> adapter_product(const LoraAdapter& a) {
    const std::size_t d = a.dim();
    std::vector<double> w(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < a.rank(); ++k) {
            const double b = a.B(i, k);
            for (std::size_t j = 0; j < d; ++j) w[i * d + j] += b * a.A(k, j);
        }
    return w;
}

// Evaluated from the residuals themselves rather than the normal-equation
// statistics, which cancel badly when the fit is nearly exact.
double objective_for_matrix(const TraceSet& traces, std::size_t layer, const std::vector<double>& w, std::size_t d,
                            double alpha, double lambda) {
    require(!traces.empty(), ErrorCode::kInput, "calibration: no traces");
    double total = 0.0;
    for (const ActivationTrace& tr : traces) {
        require(layer < tr.n_layers(), ErrorCode::kParameter, "calibration: layer out of range for traces");
        for (std::size_t t = 1; t < tr.length(); ++t) {
            const Vector& u = tr.layer_input(layer, t);
            const Vector& cur = tr.layers[layer][t];
            const Vector& prev = tr.layers[layer][t - 1];
            require(u.dim() == d, ErrorCode::kShape, "calibration: adapter dimension mismatch");
            for (std::size_t i = 0; i < d; ++i) {
                double wu = 0.0;
                for (std::size_t j = 0; j < d; ++j) wu += w[i * d + j] * u[j];
                const double r = (static_cast<double>(cur[i]) - prev[i]) - alpha * wu;
                total += r * r;
            }
        }
    }
    double frob = 0.0;
    for (double v : w) frob += v * v;
    return total + lambda * frob;
}

}  // namespace

double calibration_objective(const TraceSet& traces, std::size_t layer, const LoraAdapter& adapter, double lambda) {
    return objective_for_matrix(traces, layer, adapter_product(adapter), adapter.dim(), adapter.alpha, lambda);
}

CalibrationResult calibrate_lora(const TraceSet& traces, const Model& model, std::size_t layer, std::size_t rank,
                                 double lambda) {
    const ModelSpec& spec = model.spec();
    require(layer < spec.n_layers, ErrorCode::kParameter, "calibrate_lora: layer out of range");
    require(rank >= 1 && rank <= spec.d_model, ErrorCode::kParameter, "calibrate_lora: rank outside [1, d]");
    require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::kParameter, "calibrate_lora: lambda must be >= 0");
    const double alpha = spec.lora_alpha;
    require(alpha != 0.0, ErrorCode::kParameter, "calibrate_lora: lora_alpha must be nonzero");

    const SurrogateData s = accumulate(traces, layer);
    const std::size_t d = s.d;
    require(d == spec.d_model, ErrorCode::kShape, "calibrate_lora: trace dimension does not match model");

    // Normal equations: W (alpha^2 G + lambda I) = alpha C. M is symmetric, so
    // solve M W^T = alpha C^T with a Cholesky factorization of M.
    std::vector<double> m(d * d);
    double max_diag = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            m[i * d + j] = alpha * alpha * s.gram[i * d + j] + (i == j ? lambda : 0.0);
            if (i == j) max_diag = std::max(max_diag, m[i * d + j]);
        }
    std::vector<double> chol(d * d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double diag = m[j * d + j];
        for (std::size_t k = 0; k < j; ++k) diag -= chol[j * d + k] * chol[j * d + k];
        if (!(diag > 1e-12 * std::max(max_diag, 1e-300))) {
            fail(ErrorCode::kNumeric,
                 lambda == 0.0 ? "calibrate_lora: normal matrix is singular; use lambda > 0"
                               : "calibrate_lora: normal matrix is not positive definite");
        }
        chol[j * d + j] = std::sqrt(diag);
        for (std::size_t i = j + 1; i < d; ++i) {
            double v = m[i * d + j];
            for (std::size_t k = 0; k < j; ++k) v -= chol[i * d + k] * chol[j * d + k];
            chol[i * d + j] = v / chol[j * d + j];
        }
    }
    std::vector<double> w(d * d);
    std::vector<double> col(d);
    for (std::size_t row = 0; row < d; ++row) {
        // Right-hand side: alpha * C[row, :] (a column of alpha C^T).
        for (std::size_t i = 0; i < d; ++i) col[i] = alpha * s.cross[row * d + i];
        for (std::size_t i = 0; i < d; ++i) {
            double v = col[i];
            for (std::size_t k = 0; k < i; ++k) v -= chol[i * d + k] * col[k];
            col[i] = v / chol[i * d + i];
        }
        for (std::size_t i = d; i-- > 0;) {
            double v = col[i];
            for (std::size_t k = i + 1; k < d; ++k) v -= chol[k * d + i] * col[k];
            col[i] = v / chol[i * d + i];
        }
        for (std::size_t i = 0; i < d; ++i) w[row * d + i] = col[i];
    }

    Matrix w_star(d, d);
    for (std::size_t i = 0; i < d * d; ++i) w_star.values()[i] = static_cast<Real>(w[i]);
    LowRankFactors f = truncated_svd(w_star, rank);

    CalibrationResult r;
    r.adapter = LoraAdapter{std::move(f.A), std::move(f.B), alpha};
    r.samples = s.samples;
    r.reuse_objective = s.target_energy;
    r.full_objective = objective_for_matrix(traces, layer, w, d, alpha, lambda);
    r.objective = calibration_objective(traces, layer, r.adapter, lambda);
    return r;
}

}  // namespace loradrop
