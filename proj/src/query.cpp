#include "xaichat/query.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "xaichat/errors.hpp"
#include "xaichat/text.hpp"
#include "xaichat/validate.hpp"

namespace xaichat {

namespace {

struct Token {
  std::string text;
  std::size_t pos;
};

std::vector<Token> lex(std::string_view input) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < input.size()) {
    while (i < input.size() && std::isspace(static_cast<unsigned char>(input[i]))) ++i;
    const std::size_t start = i;
    while (i < input.size() && !std::isspace(static_cast<unsigned char>(input[i]))) ++i;
    if (i > start) out.push_back({text::to_lower(input.substr(start, i - start)), start});
  }
  return out;
}

bool parse_int(std::string_view s, std::int64_t& out) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return false;
  }
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

bool is_connective(const std::string& t) { return t == "and" || t == "or"; }

class Parser {
 public:
  Parser(std::string_view input, const Catalog& catalog, ParseOptions options)
      : input_size_(input.size()), tokens_(lex(input)), catalog_(catalog), options_(options) {}

  ParsedQuery run() {
    ParsedQuery out;
    QueryAst& ast = out.ast;
    if (tokens_.empty()) {
      throw SyntaxError(0, first_set(), "empty query");
    }
    std::vector<Connective> filter_links;
    bool in_ops = false;
    while (true) {
      const Token& head = expect_token(first_set(), "expected a filter or an operation");
      if (head.text == "filter" || head.text == "includes") {
        if (in_ops) {
          throw SyntaxError(head.pos, {}, "filters must precede operations");
        }
        ast.filters.push_back(parse_filter());
      } else {
        if (!in_ops && !ast.filters.empty()) {
          ast.bridge = filter_links.back();
          filter_links.pop_back();
        }
        in_ops = true;
        ast.operations.push_back(parse_operation(out.repaired_ops));
      }
      if (at_end()) break;
      const Token& conn = tokens_[cursor_];
      if (!is_connective(conn.text)) {
        throw SyntaxError(conn.pos, {"and", "or"}, "unexpected '" + conn.text + "'");
      }
      ++cursor_;
      const Connective c = conn.text == "or" ? Connective::Or : Connective::And;
      if (in_ops) {
        ast.op_links.push_back(c);
      } else {
        filter_links.push_back(c);
      }
      if (at_end()) {
        throw SyntaxError(input_size_, first_set(), "dangling connective");
      }
    }
    if (!filter_links.empty()) {
      const bool mixed = std::any_of(filter_links.begin(), filter_links.end(),
                                     [&](Connective c) { return c != filter_links.front(); });
      if (mixed) throw SyntaxError(0, {}, "mixed 'and'/'or' in the filter chain");
      ast.connective = filter_links.front();
    }
    if (ast.filters.size() < 2) ast.connective = Connective::And;
    return out;
  }

 private:
  [[nodiscard]] bool at_end() const noexcept { return cursor_ >= tokens_.size(); }

  const Token& expect_token(const std::vector<std::string>& expected, const std::string& why) {
    if (at_end()) throw SyntaxError(input_size_, expected, why);
    return tokens_[cursor_];
  }

  std::vector<std::string> first_set() const {
    std::vector<std::string> out;
    for (const auto& s : catalog_.entries()) {
      if (!s.is_logic()) out.push_back(s.name);
    }
    return out;
  }

  FilterNode parse_filter() {
    const Token head = tokens_[cursor_++];
    if (head.text == "includes") {
      const Token& tok = expect_token({"<token>"}, "includes needs a token");
      if (is_connective(tok.text) && cursor_ + 1 >= tokens_.size()) {
        throw SyntaxError(tok.pos, {"<token>"}, "includes needs a token");
      }
      ++cursor_;
      return Includes{tok.text};
    }
    const Token& kw = expect_token({"id"}, "filter needs 'id'");
    if (kw.text != "id") throw SyntaxError(kw.pos, {"id"}, "unexpected '" + kw.text + "'");
    ++cursor_;
    const Token& num = expect_token({"<integer>"}, "filter id needs a number");
    std::int64_t id = 0;
    if (!parse_int(num.text, id)) {
      throw SyntaxError(num.pos, {"<integer>"}, "'" + num.text + "' is not an instance id");
    }
    ++cursor_;
    return ById{id};
  }

  OpNode parse_operation(std::vector<std::string>& repaired) {
    const Token head = tokens_[cursor_++];
    const auto* spec = catalog_.find(head.text);
    if (spec == nullptr || spec->is_logic()) {
      throw Error(ErrorCode::UnknownOperation, "unknown operation '" + head.text + "'");
    }
    OpNode node{spec->name, {}};
    for (const auto& schema : spec->attributes) {
      std::optional<AttrValue> value = try_attribute(schema);
      if (!value) {
        if (!schema.required) {
          value = schema.default_value;
        } else if (options_.fill_repair_values && schema.repair_value) {
          value = schema.repair_value;
          if (std::find(repaired.begin(), repaired.end(), spec->name) == repaired.end()) {
            repaired.push_back(spec->name);
          }
        } else {
          const std::string got = at_end() ? "end of input" : "'" + tokens_[cursor_].text + "'";
          throw Error(ErrorCode::AttributeTypeError, spec->name + ": attribute '" + schema.name +
                                                         "' (" + std::string(to_string(schema.kind)) +
                                                         ") expected, got " + got);
        }
      }
      node.attrs.push_back(std::move(*value));
    }
    if (!at_end() && !is_connective(tokens_[cursor_].text)) {
      throw Error(ErrorCode::AttributeTypeError,
                  spec->name + ": unexpected attribute '" + tokens_[cursor_].text + "'");
    }
    return node;
  }

  std::optional<AttrValue> try_attribute(const AttributeSchema& schema) {
    if (at_end()) return std::nullopt;
    const std::string& t = tokens_[cursor_].text;
    switch (schema.kind) {
      case AttrKind::TopK: {
        std::int64_t n = 0;
        if (t == "topk" && cursor_ + 1 < tokens_.size() && parse_int(tokens_[cursor_ + 1].text, n)) {
          cursor_ += 2;
          return AttrValue{n};
        }
        return std::nullopt;
      }
      case AttrKind::Count:
      case AttrKind::InstanceId: {
        std::int64_t n = 0;
        if (!parse_int(t, n)) return std::nullopt;
        ++cursor_;
        return AttrValue{n};
      }
      case AttrKind::Token:
        if (is_connective(t)) return std::nullopt;
        ++cursor_;
        return AttrValue{t};
      case AttrKind::OpName: {
        const auto* target = catalog_.find(t);
        if (target == nullptr || target->is_logic()) return std::nullopt;
        ++cursor_;
        return AttrValue{t};
      }
      default: {
        const auto& values = enum_values(schema.kind);
        if (std::find(values.begin(), values.end(), t) == values.end()) return std::nullopt;
        ++cursor_;
        return AttrValue{t};
      }
    }
  }

  std::size_t input_size_;
  std::vector<Token> tokens_;
  std::size_t cursor_ = 0;
  const Catalog& catalog_;
  ParseOptions options_;
};

std::string connective_word(Connective c) { return c == Connective::Or ? "or" : "and"; }

}  // namespace

ParsedQuery parse_query(std::string_view text, const Catalog& catalog, ParseOptions options) {
  return Parser(text, catalog, options).run();
}

QueryAst parse_query(std::string_view text, const Catalog& catalog) {
  return parse_query(text, catalog, ParseOptions{}).ast;
}

QueryAst normalize(QueryAst ast, const Catalog& catalog) {
  if (ast.filters.size() < 2) ast.connective = Connective::And;
  if (ast.filters.empty()) ast.bridge = Connective::And;
  for (auto& f : ast.filters) {
    if (auto* inc = std::get_if<Includes>(&f)) inc->token = text::to_lower(text::trim(inc->token));
  }
  for (auto& node : ast.operations) {
    const auto* spec = catalog.find(node.op);
    if (spec == nullptr) continue;
    for (std::size_t i = node.attrs.size(); i < spec->attributes.size(); ++i) {
      const auto& schema = spec->attributes[i];
      if (!schema.default_value) break;
      node.attrs.push_back(*schema.default_value);
    }
  }
  return ast;
}

std::string render_query(const QueryAst& input, const Catalog& catalog) {
  const QueryAst ast = normalize(input, catalog);
  const auto report = validate(ast, catalog, ValidationContext::unbounded());
  if (!report.ok()) throw Error(ErrorCode::InvalidAst, "cannot render: " + report.summary());

  std::vector<std::string> parts;
  for (std::size_t i = 0; i < ast.filters.size(); ++i) {
    if (i != 0) parts.push_back(connective_word(ast.connective));
    if (const auto* by_id = std::get_if<ById>(&ast.filters[i])) {
      parts.push_back("filter id " + std::to_string(by_id->id));
    } else {
      parts.push_back("includes " + std::get<Includes>(ast.filters[i]).token);
    }
  }
  for (std::size_t i = 0; i < ast.operations.size(); ++i) {
    if (i == 0 && !ast.filters.empty()) parts.push_back(connective_word(ast.bridge));
    if (i != 0) parts.push_back(connective_word(ast.op_links[i - 1]));
    const auto& node = ast.operations[i];
    const auto& spec = catalog.lookup(node.op);
    std::string piece = node.op;
    for (std::size_t a = 0; a < node.attrs.size(); ++a) {
      const auto& schema = spec.attributes[a];
      if (schema.default_value && *schema.default_value == node.attrs[a]) continue;
      piece += ' ';
      if (schema.kind == AttrKind::TopK) piece += "topk ";
      piece += attr_value_string(node.attrs[a]);
    }
    parts.push_back(std::move(piece));
  }
  return text::join(parts, " ");
}

bool canonically_equal(std::string_view a, std::string_view b, const Catalog& catalog) {
  try {
    return render_query(parse_query(a, catalog), catalog) ==
           render_query(parse_query(b, catalog), catalog);
  } catch (const Error&) {
    return false;
  }
}

std::vector<std::string> operation_names(const QueryAst& ast) {
  std::vector<std::string> out;
  out.reserve(ast.operations.size());
  for (const auto& op : ast.operations) out.push_back(op.op);
  return out;
}

std::vector<std::int64_t> filter_ids(const QueryAst& ast) {
  std::vector<std::int64_t> out;
  for (const auto& f : ast.filters) {
    if (const auto* by_id = std::get_if<ById>(&f)) out.push_back(by_id->id);
  }
  return out;
}

}  // namespace xaichat
