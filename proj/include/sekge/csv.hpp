#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace sekge {

/// Quotes a field when it contains a comma, quote or newline.
std::string csv_field(std::string_view value);
std::vector<std::string> csv_split(std::string_view line);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double value);
double parse_number(std::string_view text, std::string_view context);
long long parse_integer(std::string_view text, std::string_view context);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name; throws DataError when absent.
  std::size_t column(std::string_view name) const;
};

/// Reads a headed CSV file; every row must have the header's width.
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace sekge
