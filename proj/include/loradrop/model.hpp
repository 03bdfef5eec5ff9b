// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "json.hpp"
#include "loradrop/numerics.hpp"
#include "loradrop/tensor_file.hpp"

namespace loradrop {

using TokenId = std::uint32_t;

struct ModelSpec {
    std::size_t n_layers = 8;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_kv_heads = 2;
    std::size_t d_ff = 128;
    std::size_t vocab_size = 64;
    std::size_t lora_rank = 4;
    double lora_alpha = 1.0;
    std::uint64_t seed = 0;

    // Throws kSpec on any violated invariant.
    void validate() const;

    std::size_t head_dim() const noexcept { return d_model / n_heads; }
    std::size_t kv_dim() const noexcept { return n_kv_heads * head_dim(); }

    bool operator==(const ModelSpec&) const = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

struct LayerWeights {
    Matrix wq;      // d x d
    Matrix wk;      // kv_dim x d
    Matrix wv;      // kv_dim x d
    Matrix wo;      // d x d
    Matrix w_up;    // d_ff x d
    Matrix w_down;  // d x d_ff
    Vector attn_norm;
    Vector mlp_norm;
};

// Low-rank surrogate W = B A applied as x_prev + alpha * B (A x_in).
struct LoraAdapter {
    Matrix A;  // r x d
    Matrix B;  // d x r
    double alpha = 1.0;

    static LoraAdapter zeros(std::size_t d, std::size_t rank, double alpha);

    std::size_t rank() const noexcept { return A.rows(); }
    std::size_t dim() const noexcept { return A.cols(); }
};

struct KvEntry {
    std::size_t position = 0;
    std::vector<Real> key;    // n_kv_heads x head_dim, rotary already applied
    std::vector<Real> value;  // n_kv_heads x head_dim
};

// Per-layer KV store whose position sets may have gaps where a layer ran in
// surrogate mode. Positions are strictly increasing within a layer.
class SparseKvCache {
public:
    SparseKvCache() = default;
    explicit SparseKvCache(std::size_t n_layers) : layers_(n_layers) {}

    std::size_t n_layers() const noexcept { return layers_.size(); }
    void append(std::size_t layer, KvEntry entry);

    const std::vector<KvEntry>& entries(std::size_t layer) const;
    std::size_t entry_count(std::size_t layer) const { return entries(layer).size(); }
    std::vector<std::size_t> positions(std::size_t layer) const;
    std::size_t total_entries() const noexcept;

    // Bytes held by keys and values at the given element width.
    std::size_t bytes(std::size_t bytes_per_element = sizeof(Real)) const noexcept;

private:
    std::vector<std::vector<KvEntry>> layers_;
};

// Most recent output of every layer, i.e. x_{t-1}^i for the next step.
struct HiddenLedger {
    std::vector<Vector> outputs;
};

class Model;
Model model_from_tensors(const TensorFile& file);

class Model {
public:
    explicit Model(const ModelSpec& spec);  // deterministic init from spec.seed

    const ModelSpec& spec() const noexcept { return spec_; }
    const Matrix& embedding() const noexcept { return embedding_; }
    const std::vector<LayerWeights>& layers() const noexcept { return layers_; }
    const LayerWeights& layer(std::size_t i) const;
    const Vector& final_norm() const noexcept { return final_norm_; }
    const Matrix& lm_head() const noexcept { return lm_head_; }

    const LoraAdapter& adapter(std::size_t layer) const;
    void set_adapter(std::size_t layer, LoraAdapter adapter);

    bool operator==(const Model& other) const;

private:
    friend Model model_from_tensors(const TensorFile& file);
    Model() = default;

    ModelSpec spec_;
    Matrix embedding_;
    std::vector<LayerWeights> layers_;
    Vector final_norm_;
    Matrix lm_head_;
    std::vector<LoraAdapter> adapters_;
};

inline Model init_model(const ModelSpec& spec) { return Model(spec); }

Vector embed(const Model& model, TokenId token);

// Optional introspection of one attention call.
struct AttentionProbe {
    std::vector<std::size_t> attended_positions;
    std::vector<double> head0_scores;  // softmax weights of query head 0
};

// Full transformer block at position `pos`; appends (pos, K, V) to the layer's
// cache and attends to exactly the cached entries plus the current token.
Vector full_layer_forward(const Model& model, std::size_t layer, const Vector& x_in, SparseKvCache& cache,
                          std::size_t pos, OpCounter* counter, AttentionProbe* probe = nullptr);

// x_prev_out + alpha * B (A x_in). Credits exactly 2 r d MACs; touches no cache.
Vector lora_layer_update(const LoraAdapter& adapter, const Vector& x_prev_out, const Vector& x_in,
                         OpCounter* counter);

// Final normalization and output projection.
Vector compute_logits(const Model& model, const Vector& hidden, OpCounter* counter);

// Greedy pick; ties go to the lower token id.
TokenId argmax(std::span<const Real> logits);

// Called for every position with layer = -1 for the embedding and 0..n-1 for
// each layer output.
using HiddenObserver = std::function<void(std::size_t position, int layer, const Vector& hidden)>;

struct PrefillResult {
    HiddenLedger ledger;
    SparseKvCache cache;
    Vector logits;
};

PrefillResult prefill(const Model& model, std::span<const TokenId> prompt, OpCounter* counter,
                      const HiddenObserver& observer = {});

// MACs one full layer call credits when the cache holds `cache_entries` entries.
std::uint64_t full_layer_macs(const ModelSpec& spec, std::size_t cache_entries) noexcept;

TensorFile model_to_tensors(const Model& model);
Model model_from_tensors(const TensorFile& file);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// Adapter bundles written by calibration: layer index -> adapter.
void save_adapters(const std::map<std::size_t, LoraAdapter>& adapters, const std::filesystem::path& path);
std::map<std::size_t, LoraAdapter> load_adapters(const std::filesystem::path& path);

}  // namespace loradrop
