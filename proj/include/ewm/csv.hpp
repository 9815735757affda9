#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ewm::csv {

/// A parsed comma-separated table: one header row plus data rows.
/// Supports double-quoted fields with "" escapes; no embedded newlines.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers; // 1-based source line of each row

    std::optional<std::size_t> column(std::string_view name) const;
};

Table parse(std::string_view text);
Table read(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Quotes a field when it contains a comma, quote or leading/trailing space.
std::string escape(std::string_view field);

// Locale-independent strict parse; nullopt on trailing garbage or empty input.
std::optional<double> to_double(std::string_view s);

} // namespace ewm::csv
