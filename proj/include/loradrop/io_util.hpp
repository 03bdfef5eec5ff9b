// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace loradrop {

// Writes through a sibling temp file and renames over the target, so readers
// observe either the old or the new file, never a truncated one.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

// Shortest-round-trip-ish fixed formatting, locale independent ('.' decimal).
std::string format_real(double value, int significant = 10);

// Minimal CSV builder: header first, then rows of preformatted cells.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    void add_row(const std::vector<std::string>& cells);
    const std::string& str() const noexcept { return out_; }
    std::size_t rows() const noexcept { return rows_; }

private:
    std::size_t columns_;
    std::size_t rows_ = 0;
    std::string out_;
};

}  // namespace loradrop
