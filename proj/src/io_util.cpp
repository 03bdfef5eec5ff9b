// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#include "loradrop/io_util.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "loradrop/error.hpp"

namespace loradrop {

namespace fs = std::filesystem;

void atomic_write(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) fail(ErrorCode::kIo, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) fail(ErrorCode::kIo, "cannot open " + tmp.string() + " for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) fail(ErrorCode::kIo, "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::kIo, "cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::kIo, "cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    if (f.bad()) fail(ErrorCode::kIo, "read failed for " + path.string());
    return ss.str();
}

std::string format_real(double value, int significant) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (value == 0.0) return "0";  // folds -0
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant, value);
    return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) { add_row(header); rows_ = 0; }

void CsvWriter::add_row(const std::vector<std::string>& cells) {
    require(cells.size() == columns_, ErrorCode::kShape, "csv: row has wrong column count");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ += ',';
        out_ += cells[i];
    }
    out_ += '\n';
    ++rows_;
}

}  // namespace loradrop
