#include "xaichat/errors.hpp"

#include "xaichat/text.hpp"

namespace xaichat {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return "NOT_FOUND";
    case ErrorCode::SyntaxError: return "SYNTAX_ERROR";
    case ErrorCode::UnknownOperation: return "UNKNOWN_OPERATION";
    case ErrorCode::AttributeTypeError: return "ATTRIBUTE_TYPE_ERROR";
    case ErrorCode::InvalidAst: return "INVALID_AST";
    case ErrorCode::EmptyContext: return "EMPTY_CONTEXT";
    case ErrorCode::InvalidGrammar: return "INVALID_GRAMMAR";
    case ErrorCode::Timeout: return "TIMEOUT";
    case ErrorCode::BackendUnavailable: return "BACKEND_UNAVAILABLE";
    case ErrorCode::GrammarUnsupported: return "GRAMMAR_UNSUPPORTED";
    case ErrorCode::AttributionUnavailable: return "ATTRIBUTION_UNAVAILABLE";
    case ErrorCode::DimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::Unparseable: return "UNPARSEABLE";
    case ErrorCode::SchemaError: return "SCHEMA_ERROR";
    case ErrorCode::EmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::IdNotFound: return "ID_NOT_FOUND";
    case ErrorCode::RangeError: return "RANGE_ERROR";
    case ErrorCode::EmptySubset: return "EMPTY_SUBSET";
    case ErrorCode::InvalidGoldParse: return "INVALID_GOLD_PARSE";
    case ErrorCode::ConfigError: return "CONFIG_ERROR";
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
  }
  return "UNKNOWN";
}

SyntaxError::SyntaxError(std::size_t position, std::vector<std::string> expected,
                         const std::string& detail)
    : Error(ErrorCode::SyntaxError,
            "syntax error at position " + std::to_string(position) + ": " + detail +
                (expected.empty() ? std::string{}
                                  : " (expected one of: " + text::join(expected, ", ") + ")")),
      position_(position),
      expected_(std::move(expected)) {}

}  // namespace xaichat
