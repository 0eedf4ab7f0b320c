#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedhub::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);
std::vector<std::string> split_whitespace(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

std::optional<double> parse_decimal(std::string_view s);
std::optional<long long> parse_integer(std::string_view s);
// Shortest representation that round-trips.
std::string format_decimal(double value);

// Reads an entire file; throws Error(unavailable) when it cannot be opened.
std::string read_file(const std::string& path);

// Tokenizer for the line-oriented configuration formats. Splits on whitespace,
// keeps double-quoted strings as single tokens (quotes removed, `\"` and `\\`
// unescaped) and reports the 1-based column where each token started.
struct LineToken {
  std::string value;
  std::size_t column = 0;
  bool quoted = false;
};
// Throws ParseError for an unterminated quote. Stops at an unquoted `#`.
std::vector<LineToken> tokenize_line(std::string_view line, std::size_t line_no);

// RFC 4180-style CSV: header row, commas, double-quoted fields with `""` escapes.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable parse_csv(std::string_view content);

}  // namespace fedhub::text
