#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace agro::csv {

// Comma-separated, UTF-8, header in the first row, '.' decimal separator.
// Double-quoted fields with "" escapes are accepted; surrounding
// whitespace is trimmed.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table parse(std::string_view text);
Table read(const std::filesystem::path& path);

/// Maps each expected column to its index in the header. Matching is
/// case-insensitive and order-insensitive; missing or extra columns throw
/// SchemaMismatch.
std::vector<std::size_t> bind_columns(const Table& table,
                                      std::span<const std::string_view> expected,
                                      std::string_view source);

/// Returns nullopt for an empty cell, throws std::invalid_argument on junk.
std::optional<double> parse_number(std::string_view cell);

/// Shortest representation that parses back to the same double.
std::string format_number(double value);

void write(std::ostream& out, std::span<const std::string> header,
           std::span<const std::vector<std::string>> rows);

std::string lower(std::string_view text);

}  // namespace agro::csv
