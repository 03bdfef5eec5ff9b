// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace loradrop {

enum class ErrorCode {
    kShape = 1,
    kParameter,
    kInput,
    kNumeric,
    kUndefinedSimilarity,
    kRankDeficient,
    kSpec,
    kIo,
    kConfig,
};

const char* error_code_name(ErrorCode code) noexcept;

// Single exception type for the library; the code drives C API status values
// and CLI exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) fail(code, what);
}

}  // namespace loradrop
