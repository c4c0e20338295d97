#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "xaichat/catalog.hpp"

namespace xaichat {

enum class Connective { And, Or };

struct ById {
  std::int64_t id = 0;
  bool operator==(const ById&) const = default;
};

struct Includes {
  std::string token;
  bool operator==(const Includes&) const = default;
};

using FilterNode = std::variant<ById, Includes>;

struct OpNode {
  std::string op;
  // One value per schema attribute, defaults filled in.
  std::vector<AttrValue> attrs;
  bool operator==(const OpNode&) const = default;
};

// Parsed form of the query language: a filter chain followed by an operation chain.
//
//   filter id 26 and rationalize
//   filter id 1 or filter id 2 and mistakes show
//
// `connective` joins the filters, `bridge` joins the filter chain to the first operation and
// `op_links[i]` joins operations i and i+1. Only `connective` may legally be Or.
struct QueryAst {
  std::vector<FilterNode> filters;
  Connective connective = Connective::And;
  Connective bridge = Connective::And;
  std::vector<OpNode> operations;
  std::vector<Connective> op_links;

  bool operator==(const QueryAst&) const = default;
};

struct ParseOptions {
  // Insert the catalog's repair value for a missing required attribute instead of failing.
  bool fill_repair_values = false;
};

struct ParsedQuery {
  QueryAst ast;
  // Names of the operations whose required attributes were filled from repair values.
  std::vector<std::string> repaired_ops;
};

// Throws SyntaxError, Error(UnknownOperation) or Error(AttributeTypeError).
QueryAst parse_query(std::string_view text, const Catalog& catalog = default_catalog());
ParsedQuery parse_query(std::string_view text, const Catalog& catalog, ParseOptions options);

// Canonical form: lowercase, single spaces, filters first, attributes in schema order with
// defaults omitted. Throws Error(InvalidAst) when the AST does not validate structurally.
std::string render_query(const QueryAst& ast, const Catalog& catalog = default_catalog());

// Fills defaults and resets connectives that carry no meaning (single filter).
QueryAst normalize(QueryAst ast, const Catalog& catalog = default_catalog());

// Canonical string comparison used by exact-match scoring; false when either side fails to
// parse or render.
bool canonically_equal(std::string_view a, std::string_view b,
                       const Catalog& catalog = default_catalog());

// Names of the operations in the AST, in order.
std::vector<std::string> operation_names(const QueryAst& ast);

std::vector<std::int64_t> filter_ids(const QueryAst& ast);

}  // namespace xaichat
