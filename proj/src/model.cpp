// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#include "loradrop/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace loradrop {

namespace {

constexpr double kRmsEps = 1e-6;
constexpr double kRopeBase = 10000.0;

std::string layer_prefix(std::size_t i) { return "layers." + std::to_string(i) + "."; }

Vector rms_norm(const Vector& x, const Vector& gain) {
    double ss = 0.0;
    for (Real v : x.values()) ss += static_cast<double>(v) * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.dim()) + kRmsEps);
    Vector y(x.dim());
    for (std::size_t i = 0; i < x.dim(); ++i) y[i] = static_cast<Real>(x[i] * inv * gain[i]);
    return y;
}

// Rotary embedding over `heads` contiguous head slices, each of width head_dim.
void apply_rotary(std::span<Real> x, std::size_t heads, std::size_t head_dim, std::size_t pos) {
    for (std::size_t h = 0; h < heads; ++h) {
        Real* base = x.data() + h * head_dim;
        for (std::size_t j = 0; j + 1 < head_dim; j += 2) {
            const double freq = std::pow(kRopeBase, -static_cast<double>(j) / static_cast<double>(head_dim));
            const double angle = static_cast<double>(pos) * freq;
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            const double a = base[j];
            const double b = base[j + 1];
            base[j] = static_cast<Real>(a * c - b * s);
            base[j + 1] = static_cast<Real>(a * s + b * c);
        }
    }
}

Vector add(const Vector& a, const Vector& b) {
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vector gain_vector(std::size_t d, Rng& rng) {
    Vector g(d);
    for (std::size_t i = 0; i < d; ++i) g[i] = static_cast<Real>(1.0 + 0.1 * rng.normal());
    return g;
}

}  // namespace

void ModelSpec::validate() const {
    auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::kSpec, "model spec: " + what); };
    check(n_layers >= 5, "n_layers must be >= 5 (got " + std::to_string(n_layers) + ")");
    check(d_model >= 1 && n_heads >= 1 && n_kv_heads >= 1, "dimensions must be positive");
    check(d_model % n_heads == 0, "d_model must be divisible by n_heads");
    check(n_heads % n_kv_heads == 0, "n_heads must be divisible by n_kv_heads");
    check(d_ff >= 1 && vocab_size >= 1, "d_ff and vocab_size must be positive");
    check(lora_rank >= 1 && lora_rank <= d_model, "lora_rank must lie in [1, d_model]");
    check(std::isfinite(lora_alpha), "lora_alpha must be finite");
}

nlohmann::json to_json(const ModelSpec& s) {
    return {{"n_layers", s.n_layers}, {"d_model", s.d_model},       {"n_heads", s.n_heads},
            {"n_kv_heads", s.n_kv_heads}, {"d_ff", s.d_ff},         {"vocab_size", s.vocab_size},
            {"lora_rank", s.lora_rank},   {"lora_alpha", s.lora_alpha}, {"seed", s.seed}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    try {
        s.n_layers = j.value("n_layers", s.n_layers);
        s.d_model = j.value("d_model", s.d_model);
        s.n_heads = j.value("n_heads", s.n_heads);
        s.n_kv_heads = j.value("n_kv_heads", s.n_kv_heads);
        s.d_ff = j.value("d_ff", s.d_ff);
        s.vocab_size = j.value("vocab_size", s.vocab_size);
        s.lora_rank = j.value("lora_rank", s.lora_rank);
        s.lora_alpha = j.value("lora_alpha", s.lora_alpha);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, std::string("model spec: ") + e.what());
    }
    return s;
}

LoraAdapter LoraAdapter::zeros(std::size_t d, std::size_t rank, double alpha) {
    return LoraAdapter{Matrix(rank, d), Matrix(d, rank), alpha};
}

void SparseKvCache::append(std::size_t layer, KvEntry entry) {
    require(layer < layers_.size(), ErrorCode::kParameter, "kv cache: layer index out of range");
    auto& seq = layers_[layer];
    require(seq.empty() || seq.back().position < entry.position, ErrorCode::kParameter,
            "kv cache: positions must be strictly increasing");
    seq.push_back(std::move(entry));
}

const std::vector<KvEntry>& SparseKvCache::entries(std::size_t layer) const {
    require(layer < layers_.size(), ErrorCode::kParameter, "kv cache: layer index out of range");
    return layers_[layer];
}

std::vector<std::size_t> SparseKvCache::positions(std::size_t layer) const {
    std::vector<std::size_t> out;
    for (const KvEntry& e : entries(layer)) out.push_back(e.position);
    return out;
}

std::size_t SparseKvCache::total_entries() const noexcept {
    std::size_t n = 0;
    for (const auto& seq : layers_) n += seq.size();
    return n;
}

std::size_t SparseKvCache::bytes(std::size_t bytes_per_element) const noexcept {
    std::size_t n = 0;
    for (const auto& seq : layers_)
        for (const KvEntry& e : seq) n += (e.key.size() + e.value.size()) * bytes_per_element;
    return n;
}

Model::Model(const ModelSpec& spec) : spec_(spec) {
    spec_.validate();
    const std::size_t d = spec_.d_model;
    const std::size_t kv = spec_.kv_dim();
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(d));
    const double ff_scale = 1.0 / std::sqrt(static_cast<double>(spec_.d_ff));
    // Residual branches are damped by depth so the stream stays O(1).
    const double branch = 1.0 / std::sqrt(2.0 * static_cast<double>(spec_.n_layers));

    Rng rng(spec_.seed);
    embedding_ = random_matrix(spec_.vocab_size, d, 1.0, rng);
    layers_.reserve(spec_.n_layers);
    for (std::size_t i = 0; i < spec_.n_layers; ++i) {
        LayerWeights w;
        w.wq = random_matrix(d, d, in_scale, rng);
        w.wk = random_matrix(kv, d, in_scale, rng);
        w.wv = random_matrix(kv, d, in_scale, rng);
        w.wo = random_matrix(d, d, in_scale * branch, rng);
        w.w_up = random_matrix(spec_.d_ff, d, in_scale, rng);
        w.w_down = random_matrix(d, spec_.d_ff, ff_scale * branch, rng);
        w.attn_norm = gain_vector(d, rng);
        w.mlp_norm = gain_vector(d, rng);
        layers_.push_back(std::move(w));
    }
    final_norm_ = gain_vector(d, rng);
    lm_head_ = random_matrix(spec_.vocab_size, d, in_scale, rng);
    adapters_.assign(spec_.n_layers, LoraAdapter::zeros(d, spec_.lora_rank, spec_.lora_alpha));
    // A gets a random init; B stays zero so an uncalibrated adapter is pure reuse.
    for (auto& a : adapters_) a.A = random_matrix(spec_.lora_rank, d, in_scale, rng);
}

const LayerWeights& Model::layer(std::size_t i) const {
    require(i < layers_.size(), ErrorCode::kParameter, "layer index out of range");
    return layers_[i];
}

const LoraAdapter& Model::adapter(std::size_t layer) const {
    require(layer < adapters_.size(), ErrorCode::kParameter, "adapter index out of range");
    return adapters_[layer];
}

void Model::set_adapter(std::size_t layer, LoraAdapter adapter) {
    require(layer < adapters_.size(), ErrorCode::kParameter, "adapter index out of range");
    const std::size_t d = spec_.d_model;
    require(adapter.A.cols() == d && adapter.B.rows() == d && adapter.A.rows() == adapter.B.cols() &&
                adapter.A.rows() >= 1 && adapter.A.rows() <= d,
            ErrorCode::kShape, "adapter shapes do not match the model");
    adapters_[layer] = std::move(adapter);
}

bool Model::operator==(const Model& o) const {
    if (!(spec_ == o.spec_) || !(embedding_ == o.embedding_) || !(final_norm_ == o.final_norm_) ||
        !(lm_head_ == o.lm_head_) || layers_.size() != o.layers_.size())
        return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& a = layers_[i];
        const auto& b = o.layers_[i];
        if (!(a.wq == b.wq && a.wk == b.wk && a.wv == b.wv && a.wo == b.wo && a.w_up == b.w_up &&
              a.w_down == b.w_down && a.attn_norm == b.attn_norm && a.mlp_norm == b.mlp_norm))
            return false;
        const auto& x = adapters_[i];
        const auto& y = o.adapters_[i];
        if (!(x.A == y.A && x.B == y.B && x.alpha == y.alpha)) return false;
    }
    return true;
}

Vector embed(const Model& model, TokenId token) {
    require(token < model.spec().vocab_size, ErrorCode::kInput, "token id " + std::to_string(token) + " out of vocab");
    const auto row = model.embedding().row(token);
    return Vector(std::vector<Real>(row.begin(), row.end()));
}

std::uint64_t full_layer_macs(const ModelSpec& s, std::size_t cache_entries) noexcept {
    const std::uint64_t d = s.d_model;
    const std::uint64_t projections = 2 * d * d + 2 * s.kv_dim() * d + 2 * s.d_ff * d;
    // Scores and weighted values over cache entries plus the current token.
    const std::uint64_t attention = 2 * d * (static_cast<std::uint64_t>(cache_entries) + 1);
    return projections + attention;
}

Vector full_layer_forward(const Model& model, std::size_t layer, const Vector& x_in, SparseKvCache& cache,
                          std::size_t pos, OpCounter* counter, AttentionProbe* probe) {
    const ModelSpec& s = model.spec();
    require(x_in.dim() == s.d_model, ErrorCode::kShape, "full_layer_forward: input dimension mismatch");
    require(cache.n_layers() == s.n_layers, ErrorCode::kShape, "full_layer_forward: cache layer count mismatch");
    const LayerWeights& w = model.layer(layer);
    const auto& cached = cache.entries(layer);
    require(cached.empty() || cached.back().position < pos, ErrorCode::kParameter,
            "full_layer_forward: cache holds positions >= " + std::to_string(pos));

    const std::size_t hd = s.head_dim();
    const std::size_t group = s.n_heads / s.n_kv_heads;

    const Vector xn = rms_norm(x_in, w.attn_norm);
    Vector q = matvec(w.wq, xn, counter);
    Vector k = matvec(w.wk, xn, counter);
    Vector v = matvec(w.wv, xn, counter);
    apply_rotary(q.span(), s.n_heads, hd, pos);
    apply_rotary(k.span(), s.n_kv_heads, hd, pos);

    const std::size_t n_keys = cached.size() + 1;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    Vector attn(s.d_model);
    std::vector<double> scores(n_keys);
    for (std::size_t h = 0; h < s.n_heads; ++h) {
        const std::size_t g = h / group;
        const std::span<const Real> qh(q.values().data() + h * hd, hd);
        auto key_at = [&](std::size_t e) -> std::span<const Real> {
            const auto& src = e < cached.size() ? cached[e].key : k.values();
            return {src.data() + g * hd, hd};
        };
        auto value_at = [&](std::size_t e) -> std::span<const Real> {
            const auto& src = e < cached.size() ? cached[e].value : v.values();
            return {src.data() + g * hd, hd};
        };
        double max_score = -INFINITY;
        for (std::size_t e = 0; e < n_keys; ++e) {
            scores[e] = dot(qh, key_at(e)) * scale;
            max_score = std::max(max_score, scores[e]);
        }
        double z = 0.0;
        for (double& sc : scores) {
            sc = std::exp(sc - max_score);
            z += sc;
        }
        for (double& sc : scores) sc /= z;
        for (std::size_t c = 0; c < hd; ++c) {
            double acc = 0.0;
            for (std::size_t e = 0; e < n_keys; ++e) acc += scores[e] * value_at(e)[c];
            attn[h * hd + c] = static_cast<Real>(acc);
        }
        if (probe != nullptr && h == 0) probe->head0_scores = scores;
    }
    credit(counter, 2 * static_cast<std::uint64_t>(s.d_model) * n_keys);
    if (probe != nullptr) {
        probe->attended_positions = cache.positions(layer);
        probe->attended_positions.push_back(pos);
    }

    const Vector h1 = add(x_in, matvec(w.wo, attn, counter));
    const Vector hn = rms_norm(h1, w.mlp_norm);
    Vector up = matvec(w.w_up, hn, counter);
    for (Real& u : up.values()) u = static_cast<Real>(u / (1.0 + std::exp(-static_cast<double>(u))));
    const Vector out = add(h1, matvec(w.w_down, up, counter));

    cache.append(layer, KvEntry{pos, std::move(k.values()), std::move(v.values())});
    return out;
}

Vector lora_layer_update(const LoraAdapter& adapter, const Vector& x_prev_out, const Vector& x_in,
                         OpCounter* counter) {
    const std::size_t d = adapter.dim();
    require(x_prev_out.dim() == d && x_in.dim() == d && adapter.B.rows() == d &&
                adapter.B.cols() == adapter.rank(),
            ErrorCode::kShape, "lora_layer_update: dimension mismatch");
    const Vector low = matvec(adapter.A, x_in, counter);
    const Vector delta = matvec(adapter.B, low, counter);
    Vector out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<Real>(x_prev_out[i] + adapter.alpha * delta[i]);
    return out;
}

Vector compute_logits(const Model& model, const Vector& hidden, OpCounter* counter) {
    require(hidden.dim() == model.spec().d_model, ErrorCode::kShape, "compute_logits: dimension mismatch");
    return matvec(model.lm_head(), rms_norm(hidden, model.final_norm()), counter);
}

TokenId argmax(std::span<const Real> logits) {
    require(!logits.empty(), ErrorCode::kInput, "argmax of empty logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return static_cast<TokenId>(best);
}

PrefillResult prefill(const Model& model, std::span<const TokenId> prompt, OpCounter* counter,
                      const HiddenObserver& observer) {
    require(!prompt.empty(), ErrorCode::kInput, "prefill: empty prompt");
    const std::size_t n = model.spec().n_layers;
    PrefillResult r{HiddenLedger{std::vector<Vector>(n)}, SparseKvCache(n), Vector()};
    Vector x;
    for (std::size_t pos = 0; pos < prompt.size(); ++pos) {
        x = embed(model, prompt[pos]);
        if (observer) observer(pos, -1, x);
        for (std::size_t i = 0; i < n; ++i) {
            x = full_layer_forward(model, i, x, r.cache, pos, counter);
            if (observer) observer(pos, static_cast<int>(i), x);
            if (pos + 1 == prompt.size()) r.ledger.outputs[i] = x;
        }
    }
    r.logits = compute_logits(model, x, counter);
    return r;
}

TensorFile model_to_tensors(const Model& model) {
    TensorFile f;
    f.meta["kind"] = "model";
    f.meta["spec"] = to_json(model.spec());
    f.meta["seed"] = model.spec().seed;
    nlohmann::json alphas = nlohmann::json::array();
    f.add("embedding", model.embedding());
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        const LayerWeights& w = model.layers()[i];
        const std::string p = layer_prefix(i);
        f.add(p + "wq", w.wq);
        f.add(p + "wk", w.wk);
        f.add(p + "wv", w.wv);
        f.add(p + "wo", w.wo);
        f.add(p + "w_up", w.w_up);
        f.add(p + "w_down", w.w_down);
        f.add(p + "attn_norm", w.attn_norm);
        f.add(p + "mlp_norm", w.mlp_norm);
        f.add(p + "lora.A", model.adapter(i).A);
        f.add(p + "lora.B", model.adapter(i).B);
        alphas.push_back(model.adapter(i).alpha);
    }
    f.add("final_norm", model.final_norm());
    f.add("lm_head", model.lm_head());
    f.meta["lora_alpha"] = alphas;
    return f;
}

Model model_from_tensors(const TensorFile& f) {
    require(f.meta.value("kind", "") == "model", ErrorCode::kInput, "container does not hold a model");
    Model m;
    m.spec_ = model_spec_from_json(f.meta.at("spec"));
    m.spec_.validate();
    const ModelSpec& s = m.spec_;
    auto shaped = [](Matrix mat, std::size_t r, std::size_t c, const std::string& name) {
        require(mat.rows() == r && mat.cols() == c, ErrorCode::kInput, "tensor '" + name + "' has wrong shape");
        return mat;
    };
    auto vec = [&](const std::string& name) {
        Vector v = f.vector(name);
        require(v.dim() == s.d_model, ErrorCode::kInput, "tensor '" + name + "' has wrong shape");
        return v;
    };
    m.embedding_ = shaped(f.matrix("embedding"), s.vocab_size, s.d_model, "embedding");
    const auto& alphas = f.meta.at("lora_alpha");
    require(alphas.size() == s.n_layers, ErrorCode::kInput, "lora_alpha list length mismatch");
    for (std::size_t i = 0; i < s.n_layers; ++i) {
        const std::string p = layer_prefix(i);
        LayerWeights w;
        w.wq = shaped(f.matrix(p + "wq"), s.d_model, s.d_model, p + "wq");
        w.wk = shaped(f.matrix(p + "wk"), s.kv_dim(), s.d_model, p + "wk");
        w.wv = shaped(f.matrix(p + "wv"), s.kv_dim(), s.d_model, p + "wv");
        w.wo = shaped(f.matrix(p + "wo"), s.d_model, s.d_model, p + "wo");
        w.w_up = shaped(f.matrix(p + "w_up"), s.d_ff, s.d_model, p + "w_up");
        w.w_down = shaped(f.matrix(p + "w_down"), s.d_model, s.d_ff, p + "w_down");
        w.attn_norm = vec(p + "attn_norm");
        w.mlp_norm = vec(p + "mlp_norm");
        m.layers_.push_back(std::move(w));
        Matrix a = f.matrix(p + "lora.A");
        Matrix b = f.matrix(p + "lora.B");
        m.adapters_.push_back(LoraAdapter{std::move(a), std::move(b), alphas[i].get<double>()});
    }
    m.final_norm_ = vec("final_norm");
    m.lm_head_ = shaped(f.matrix("lm_head"), s.vocab_size, s.d_model, "lm_head");
    for (std::size_t i = 0; i < s.n_layers; ++i) {
        LoraAdapter a = m.adapters_[i];
        m.set_adapter(i, std::move(a));  // re-validates shapes
    }
    return m;
}

void save_model(const Model& model, const std::filesystem::path& path) { model_to_tensors(model).save(path); }

Model load_model(const std::filesystem::path& path) { return model_from_tensors(TensorFile::load(path)); }

void save_adapters(const std::map<std::size_t, LoraAdapter>& adapters, const std::filesystem::path& path) {
    TensorFile f;
    f.meta["kind"] = "adapters";
    nlohmann::json layers = nlohmann::json::array();
    nlohmann::json alphas = nlohmann::json::array();
    for (const auto& [layer, a] : adapters) {
        f.add("adapters." + std::to_string(layer) + ".A", a.A);
        f.add("adapters." + std::to_string(layer) + ".B", a.B);
        layers.push_back(layer);
        alphas.push_back(a.alpha);
    }
    f.meta["layers"] = layers;
    f.meta["alpha"] = alphas;
    f.save(path);
}

std::map<std::size_t, LoraAdapter> load_adapters(const std::filesystem::path& path) {
    const TensorFile f = TensorFile::load(path);
    require(f.meta.value("kind", "") == "adapters", ErrorCode::kInput, "container does not hold adapters");
    std::map<std::size_t, LoraAdapter> out;
    const auto& layers = f.meta.at("layers");
    const auto& alphas = f.meta.at("alpha");
    require(layers.size() == alphas.size(), ErrorCode::kInput, "adapter manifest length mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto layer = layers[i].get<std::size_t>();
        out[layer] = LoraAdapter{f.matrix("adapters." + std::to_string(layer) + ".A"),
                                 f.matrix("adapters." + std::to_string(layer) + ".B"), alphas[i].get<double>()};
    }
    return out;
}

}  // namespace loradrop
