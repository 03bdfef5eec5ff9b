// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "loradrop/numerics.hpp"

namespace loradrop {

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<Real> data;

    std::size_t element_count() const noexcept;
};

// Flat binary container of named tensors.
//
// Layout (little-endian):
//   bytes 0..7   magic "LDTENSR1"
//   bytes 8..15  u64 manifest length M
//   next M bytes JSON manifest:
//                {"format":"loradrop-tensors","version":1,"dtype":"f32"|"f64",
//                 "meta":{...},
//                 "tensors":[{"name":..,"shape":[..],"offset":..,"nbytes":..}]}
//   remainder    raw tensor payloads; offsets are relative to the payload start
//                and 8-byte aligned.
class TensorFile {
public:
    nlohmann::json meta = nlohmann::json::object();

    void add(Tensor t);
    void add(const std::string& name, const Matrix& m);
    void add(const std::string& name, const Vector& v);

    bool contains(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    Matrix matrix(const std::string& name) const;
    Vector vector(const std::string& name) const;

    const std::vector<Tensor>& tensors() const noexcept { return tensors_; }

    std::string serialize() const;
    static TensorFile deserialize(const std::string& bytes);

    void save(const std::filesystem::path& path) const;
    static TensorFile load(const std::filesystem::path& path);

private:
    std::vector<Tensor> tensors_;
};

const char* real_dtype_name() noexcept;

}  // namespace loradrop
