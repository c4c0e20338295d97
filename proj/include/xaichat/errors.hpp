#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace xaichat {

enum class ErrorCode {
  NotFound,
  SyntaxError,
  UnknownOperation,
  AttributeTypeError,
  InvalidAst,
  EmptyContext,
  InvalidGrammar,
  Timeout,
  BackendUnavailable,
  GrammarUnsupported,
  AttributionUnavailable,
  DimensionMismatch,
  Unparseable,
  SchemaError,
  EmptyDataset,
  IdNotFound,
  RangeError,
  EmptySubset,
  InvalidGoldParse,
  ConfigError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, std::vector<std::string> expected, const std::string& detail);

  [[nodiscard]] std::size_t position() const noexcept { return position_; }
  [[nodiscard]] const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t position_;
  std::vector<std::string> expected_;
};

// Thrown for data files that violate their schema; `line` is 1-based, 0 when unknown.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, const std::string& reason)
      : Error(ErrorCode::SchemaError,
              line == 0 ? reason : "line " + std::to_string(line) + ": " + reason),
        line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace xaichat
