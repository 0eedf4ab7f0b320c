#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedhub {

enum class ErrorCode {
  parse,        // malformed document or expression
  invalid,      // well-formed but violates an invariant
  not_found,    // unknown id or name
  conflict,     // duplicate id, already-curated fact, out-of-order event
  denied,       // authorization failure
  corrupt,      // persisted state failed verification
  unavailable,  // I/O or network failure
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Parse failures carry a location. Line-oriented formats set line/column (1-based);
// expression parsers set offset (0-based byte offset) and leave line at 0.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column, std::size_t offset = 0)
      : Error(ErrorCode::parse, what), line_(line), column_(column), offset_(offset) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::size_t offset_;
};

}  // namespace fedhub
