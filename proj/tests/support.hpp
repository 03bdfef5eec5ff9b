// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <unistd.h>

#include "loradrop/error.hpp"
#include "loradrop/model.hpp"

namespace loradrop::testing {

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("loradrop-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Error code thrown by f, or nullopt when it returns normally.
inline std::optional<ErrorCode> code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

inline ModelSpec tiny_spec(std::size_t n_layers = 6, std::uint64_t seed = 7) {
    ModelSpec s;
    s.n_layers = n_layers;
    s.d_model = 16;
    s.n_heads = 4;
    s.n_kv_heads = 2;
    s.d_ff = 32;
    s.vocab_size = 32;
    s.lora_rank = 2;
    s.seed = seed;
    return s;
}

}  // namespace loradrop::testing
