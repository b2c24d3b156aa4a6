#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace redl {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

/// Minimal CSV table: a header and rows of already-formatted cells. No quoting; cells must
/// not contain commas or newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::string to_string() const;
  void write(const std::filesystem::path& path) const;
  static CsvTable read(const std::filesystem::path& path);
  /// Index of a header column; throws std::out_of_range when absent.
  std::size_t column(std::string_view name) const;
};

std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace redl
