// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#include "loradrop/tensor_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "loradrop/io_util.hpp"

namespace loradrop {

static_assert(std::endian::native == std::endian::little, "tensor container assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'D', 'T', 'E', 'N', 'S', 'R', '1'};
constexpr std::size_t kAlign = 8;

std::size_t align_up(std::size_t n) { return (n + kAlign - 1) / kAlign * kAlign; }

}  // namespace

const char* real_dtype_name() noexcept { return sizeof(Real) == 4 ? "f32" : "f64"; }

std::size_t Tensor::element_count() const noexcept {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

void TensorFile::add(Tensor t) {
    require(t.element_count() == t.data.size(), ErrorCode::kShape, "tensor '" + t.name + "': shape/data mismatch");
    require(!contains(t.name), ErrorCode::kInput, "duplicate tensor name '" + t.name + "'");
    tensors_.push_back(std::move(t));
}

void TensorFile::add(const std::string& name, const Matrix& m) { add(Tensor{name, {m.rows(), m.cols()}, m.values()}); }

void TensorFile::add(const std::string& name, const Vector& v) { add(Tensor{name, {v.dim()}, v.values()}); }

bool TensorFile::contains(const std::string& name) const {
    return std::any_of(tensors_.begin(), tensors_.end(), [&](const Tensor& t) { return t.name == name; });
}

const Tensor& TensorFile::get(const std::string& name) const {
    for (const Tensor& t : tensors_)
        if (t.name == name) return t;
    fail(ErrorCode::kInput, "tensor '" + name + "' not found");
}

Matrix TensorFile::matrix(const std::string& name) const {
    const Tensor& t = get(name);
    require(t.shape.size() == 2, ErrorCode::kShape, "tensor '" + name + "' is not 2-D");
    return Matrix(t.shape[0], t.shape[1], t.data);
}

Vector TensorFile::vector(const std::string& name) const {
    const Tensor& t = get(name);
    require(t.shape.size() == 1, ErrorCode::kShape, "tensor '" + name + "' is not 1-D");
    return Vector(t.data);
}

std::string TensorFile::serialize() const {
    nlohmann::json manifest;
    manifest["format"] = "loradrop-tensors";
    manifest["version"] = 1;
    manifest["dtype"] = real_dtype_name();
    manifest["meta"] = meta;
    manifest["tensors"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const Tensor& t : tensors_) {
        const std::size_t nbytes = t.data.size() * sizeof(Real);
        manifest["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"nbytes", nbytes}});
        offset = align_up(offset + nbytes);
    }
    const std::string text = manifest.dump();

    std::string out;
    out.reserve(16 + text.size() + offset);
    out.append(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.append(reinterpret_cast<const char*>(&len), sizeof len);
    out += text;
    const std::size_t base = out.size();
    out.resize(base + offset, '\0');
    std::size_t at = 0;
    for (const Tensor& t : tensors_) {
        const std::size_t nbytes = t.data.size() * sizeof(Real);
        if (nbytes) std::memcpy(out.data() + base + at, t.data.data(), nbytes);
        at = align_up(at + nbytes);
    }
    return out;
}

TensorFile TensorFile::deserialize(const std::string& bytes) {
    require(bytes.size() >= 16 && std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0, ErrorCode::kInput,
            "not a loradrop tensor container (bad magic)");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, sizeof len);
    require(16 + len <= bytes.size(), ErrorCode::kInput, "truncated tensor manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(16, len));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kInput, std::string("malformed tensor manifest: ") + e.what());
    }
    require(manifest.value("format", "") == "loradrop-tensors", ErrorCode::kInput, "unknown container format");
    const std::string dtype = manifest.value("dtype", "");
    require(dtype == real_dtype_name(), ErrorCode::kInput,
            "container dtype " + dtype + " does not match build dtype " + real_dtype_name());

    TensorFile file;
    file.meta = manifest.value("meta", nlohmann::json::object());
    const std::size_t base = 16 + len;
    for (const auto& entry : manifest.at("tensors")) {
        Tensor t;
        t.name = entry.at("name").get<std::string>();
        t.shape = entry.at("shape").get<std::vector<std::size_t>>();
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto nbytes = entry.at("nbytes").get<std::size_t>();
        require(nbytes == t.element_count() * sizeof(Real), ErrorCode::kInput, "tensor '" + t.name + "': bad size");
        require(base + offset + nbytes <= bytes.size(), ErrorCode::kInput, "tensor '" + t.name + "': truncated data");
        t.data.resize(t.element_count());
        if (nbytes) std::memcpy(t.data.data(), bytes.data() + base + offset, nbytes);
        file.add(std::move(t));
    }
    return file;
}

void TensorFile::save(const std::filesystem::path& path) const { atomic_write(path, serialize()); }

TensorFile TensorFile::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

}  // namespace loradrop
