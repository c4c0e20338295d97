#include "xaichat/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "xaichat/errors.hpp"
#include "xaichat/validate.hpp"

namespace xaichat {

// ---------------------------------------------------------------------------
// Compilation: catalog + context -> grammar text
// ---------------------------------------------------------------------------

namespace {

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string alternation(const std::vector<std::string>& values) {
  std::vector<std::string> quoted;
  quoted.reserve(values.size());
  for (const auto& v : values) quoted.push_back(quote(v));
  std::string out;
  for (std::size_t i = 0; i < quoted.size(); ++i) {
    if (i != 0) out += " | ";
    out += quoted[i];
  }
  return out;
}

void require_subset(const std::vector<std::string>& values, AttrKind kind) {
  const auto& legal = enum_values(kind);
  if (values.empty()) {
    throw Error(ErrorCode::InvalidArgument, std::string(to_string(kind)) + " list is empty");
  }
  for (const auto& v : values) {
    if (std::find(legal.begin(), legal.end(), v) == legal.end()) {
      throw Error(ErrorCode::InvalidArgument,
                  "'" + v + "' is not a legal " + std::string(to_string(kind)));
    }
  }
}

std::vector<std::string> without(const std::vector<std::string>& values,
                                 const std::optional<AttrValue>& excluded) {
  std::vector<std::string> out;
  for (const auto& v : values) {
    if (excluded && *excluded == AttrValue{v}) continue;
    out.push_back(v);
  }
  return out;
}

}  // namespace

FormalGrammar compile_grammar(const Catalog& catalog, const GrammarContext& context) {
  require_subset(context.methods, AttrKind::MethodName);
  require_subset(context.metrics, AttrKind::Metric);
  if (context.max_filters < 1 || context.max_operations < 1) {
    throw Error(ErrorCode::InvalidArgument, "chain lengths must be at least 1");
  }

  std::vector<std::string> id_parts;
  if (context.dataset_size > 0) {
    id_parts.push_back("INT[0.." + std::to_string(context.dataset_size - 1) + "]");
  }
  std::set<std::int64_t> extra_ids;
  for (auto id : context.custom_input_ids) {
    if (id >= context.dataset_size) extra_ids.insert(id);
  }
  for (auto id : extra_ids) id_parts.push_back(quote(std::to_string(id)));
  if (id_parts.empty()) {
    throw Error(ErrorCode::EmptyContext, "grammar context has no addressable instance ids");
  }

  const std::string count_lexeme = "INT[1.." + std::to_string(count_limit(context.dataset_size)) + "]";

  std::ostringstream rules;
  std::vector<std::string> instance_ops;
  std::vector<std::string> free_ops;
  bool uses_method = false;
  bool uses_metric = false;

  for (const auto& spec : catalog.entries()) {
    if (spec.is_logic() || spec.is_filter()) continue;
    std::string body = quote(spec.name);
    bool has_parts = false;
    for (const auto& attr : spec.attributes) {
      std::string value;
      switch (attr.kind) {
        case AttrKind::Count: value = count_lexeme; break;
        case AttrKind::TopK: value = "\"topk \" INT[1..]"; break;
        case AttrKind::MethodName: {
          const auto values = attr.required ? context.methods
                                            : without(context.methods, attr.default_value);
          if (!values.empty()) {
            value = "method";
            uses_method = true;
          }
          break;
        }
        case AttrKind::Metric: {
          value = "metric";
          uses_metric = true;
          break;
        }
        case AttrKind::OpName: value = "op_name"; break;
        default: {
          const auto values = attr.required ? enum_values(attr.kind)
                                            : without(enum_values(attr.kind), attr.default_value);
          if (!values.empty()) value = "(" + alternation(values) + ")";
          break;
        }
      }
      if (value.empty()) continue;
      has_parts = true;
      body += attr.required ? " \" \" " + value : " (\" \" " + value + ")?";
    }
    std::string ref = quote(spec.name);
    if (has_parts) {
      ref = "op_" + spec.name;
      rules << ref << " ::= " << body << "\n";
    }
    (spec.instance_scoped() ? instance_ops : free_ops).push_back(ref);
  }

  auto join_alt = [](const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i != 0) out += " | ";
      out += xs[i];
    }
    return out;
  };

  auto chain = [](const std::string& item, const std::string& sep, int max_len, int min_extra) {
    if (max_len <= 1) return item;
    return item + " (" + quote(sep) + " " + item + "){" + std::to_string(min_extra) + "," +
           std::to_string(max_len - 1) + "}";
  };

  std::ostringstream out;
  out << "# Query language grammar, compiled for a dataset of " << context.dataset_size
      << " instance(s)";
  if (!extra_ids.empty()) out << " plus " << extra_ids.size() << " custom input(s)";
  out << ".\n";
  out << "root ::= filtered | unfiltered\n";
  out << "filtered ::= filters \" and \" ops\n";
  if (context.max_filters > 1) {
    out << "filters ::= " << chain("filter", " and ", context.max_filters, 0) << " | "
        << chain("filter", " or ", context.max_filters, 1) << "\n";
  } else {
    out << "filters ::= filter\n";
  }
  out << "filter ::= \"filter id \" id | \"includes \" WORD\n";
  out << "id ::= " << join_alt(id_parts) << "\n";
  out << "ops ::= " << chain("op", " and ", context.max_operations, 0) << "\n";
  if (context.focus_available) {
    out << "unfiltered ::= ops\n";
  } else {
    out << "unfiltered ::= " << chain("free_op", " and ", context.max_operations, 0) << "\n";
  }
  out << "op ::= instance_op | free_op\n";
  out << "instance_op ::= " << join_alt(instance_ops) << "\n";
  out << "free_op ::= " << join_alt(free_ops) << "\n";
  out << rules.str();
  if (uses_method) {
    const auto* nlp = catalog.find("nlpattribute");
    std::optional<AttrValue> def;
    if (nlp != nullptr) {
      for (const auto& a : nlp->attributes) {
        if (a.kind == AttrKind::MethodName) def = a.default_value;
      }
    }
    out << "method ::= " << alternation(without(context.methods, def)) << "\n";
  }
  if (uses_metric) out << "metric ::= " << alternation(context.metrics) << "\n";
  out << "op_name ::= " << alternation(catalog.operation_names()) << "\n";
  return FormalGrammar{out.str(), "root"};
}

// ---------------------------------------------------------------------------
// Grammar parsing, sampling and recognition
// ---------------------------------------------------------------------------

struct Grammar::Node {
  enum class Kind { Literal, Ref, Seq, Alt, Repeat, Int, Word };
  Kind kind;
  std::string text;
  std::vector<std::unique_ptr<Node>> children;
  int min = 0;
  int max = 0;
  std::int64_t lo = 0;
  std::int64_t hi = -1;  // negative: unbounded
  const Node* target = nullptr;
};

struct Grammar::Impl {
  std::map<std::string, std::unique_ptr<Node>> rules;
  const Node* start = nullptr;
};

namespace {

using Node = Grammar::Node;

enum class Tk { Ident, String, Number, Define, Pipe, LParen, RParen, Question, LBrace, RBrace,
                Comma, LBracket, RBracket, DotDot, End };

struct GTok {
  Tk kind;
  std::string text;
  std::size_t line;
};

[[noreturn]] void fail(std::size_t line, const std::string& why) {
  throw Error(ErrorCode::InvalidGrammar, "grammar line " + std::to_string(line) + ": " + why);
}

std::vector<GTok> tokenize(std::string_view src) {
  std::vector<GTok> out;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
    } else if (c == '"') {
      std::string lit;
      ++i;
      while (i < src.size() && src[i] != '"') {
        if (src[i] == '\n') fail(line, "unterminated string");
        if (src[i] == '\\' && i + 1 < src.size()) ++i;
        lit.push_back(src[i++]);
      }
      if (i >= src.size()) fail(line, "unterminated string");
      ++i;
      out.push_back({Tk::String, std::move(lit), line});
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      out.push_back({Tk::Ident, std::string(src.substr(i, j - i)), line});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      out.push_back({Tk::Number, std::string(src.substr(i, j - i)), line});
      i = j;
    } else if (src.substr(i, 3) == "::=") {
      out.push_back({Tk::Define, "::=", line});
      i += 3;
    } else if (src.substr(i, 2) == "..") {
      out.push_back({Tk::DotDot, "..", line});
      i += 2;
    } else {
      Tk k;
      switch (c) {
        case '|': k = Tk::Pipe; break;
        case '(': k = Tk::LParen; break;
        case ')': k = Tk::RParen; break;
        case '?': k = Tk::Question; break;
        case '{': k = Tk::LBrace; break;
        case '}': k = Tk::RBrace; break;
        case ',': k = Tk::Comma; break;
        case '[': k = Tk::LBracket; break;
        case ']': k = Tk::RBracket; break;
        default: fail(line, std::string("unexpected character '") + c + "'");
      }
      out.push_back({k, std::string(1, c), line});
      ++i;
    }
  }
  out.push_back({Tk::End, "", line});
  return out;
}

class GrammarParser {
 public:
  explicit GrammarParser(std::vector<GTok> toks) : toks_(std::move(toks)) {}

  std::map<std::string, std::unique_ptr<Node>> run() {
    std::map<std::string, std::unique_ptr<Node>> rules;
    while (peek().kind != Tk::End) {
      const GTok name = next();
      if (name.kind != Tk::Ident) fail(name.line, "expected a rule name");
      if (next().kind != Tk::Define) fail(name.line, "expected '::=' after " + name.text);
      if (name.text == "INT" || name.text == "WORD") fail(name.line, name.text + " is reserved");
      auto body = expression();
      if (!rules.emplace(name.text, std::move(body)).second) {
        fail(name.line, "rule '" + name.text + "' defined twice");
      }
    }
    return rules;
  }

 private:
  const GTok& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  GTok next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }
  void expect(Tk kind, const char* what) {
    const GTok t = next();
    if (t.kind != kind) fail(t.line, std::string("expected ") + what);
  }

  bool at_rule_boundary() const {
    return peek().kind == Tk::End || (peek().kind == Tk::Ident && peek(1).kind == Tk::Define);
  }

  std::unique_ptr<Node> expression() {
    std::vector<std::unique_ptr<Node>> alts;
    alts.push_back(sequence());
    while (peek().kind == Tk::Pipe) {
      next();
      alts.push_back(sequence());
    }
    if (alts.size() == 1) return std::move(alts.front());
    auto node = std::make_unique<Node>();
    node->kind = Node::Kind::Alt;
    node->children = std::move(alts);
    return node;
  }

  std::unique_ptr<Node> sequence() {
    std::vector<std::unique_ptr<Node>> items;
    while (!at_rule_boundary() && peek().kind != Tk::Pipe && peek().kind != Tk::RParen) {
      items.push_back(item());
    }
    if (items.empty()) fail(peek().line, "empty alternative");
    if (items.size() == 1) return std::move(items.front());
    auto node = std::make_unique<Node>();
    node->kind = Node::Kind::Seq;
    node->children = std::move(items);
    return node;
  }

  std::unique_ptr<Node> item() {
    auto base = primary();
    if (peek().kind == Tk::Question) {
      next();
      return repeat(std::move(base), 0, 1);
    }
    if (peek().kind == Tk::LBrace) {
      const std::size_t line = next().line;
      const GTok lo = next();
      expect(Tk::Comma, "','");
      const GTok hi = next();
      expect(Tk::RBrace, "'}'");
      if (lo.kind != Tk::Number || hi.kind != Tk::Number) fail(line, "repetition bounds must be numbers");
      const int mn = std::stoi(lo.text);
      const int mx = std::stoi(hi.text);
      if (mn > mx) fail(line, "repetition bounds out of order");
      return repeat(std::move(base), mn, mx);
    }
    return base;
  }

  static std::unique_ptr<Node> repeat(std::unique_ptr<Node> child, int mn, int mx) {
    auto node = std::make_unique<Node>();
    node->kind = Node::Kind::Repeat;
    node->min = mn;
    node->max = mx;
    node->children.push_back(std::move(child));
    return node;
  }

  std::unique_ptr<Node> primary() {
    const GTok t = next();
    auto node = std::make_unique<Node>();
    switch (t.kind) {
      case Tk::String:
        node->kind = Node::Kind::Literal;
        node->text = t.text;
        return node;
      case Tk::LParen: {
        auto inner = expression();
        expect(Tk::RParen, "')'");
        return inner;
      }
      case Tk::Ident:
        if (t.text == "WORD") {
          node->kind = Node::Kind::Word;
          return node;
        }
        if (t.text == "INT") {
          node->kind = Node::Kind::Int;
          expect(Tk::LBracket, "'[' after INT");
          const GTok lo = next();
          if (lo.kind != Tk::Number) fail(t.line, "INT needs a lower bound");
          expect(Tk::DotDot, "'..'");
          node->lo = std::stoll(lo.text);
          if (peek().kind == Tk::Number) {
            node->hi = std::stoll(next().text);
            if (node->hi < node->lo) fail(t.line, "INT range is empty");
          }
          expect(Tk::RBracket, "']'");
          return node;
        }
        node->kind = Node::Kind::Ref;
        node->text = t.text;
        return node;
      default:
        fail(t.line, "unexpected '" + t.text + "'");
    }
  }

  std::vector<GTok> toks_;
  std::size_t pos_ = 0;
};

void resolve(Node& node, const std::map<std::string, std::unique_ptr<Node>>& rules) {
  if (node.kind == Node::Kind::Ref) {
    auto it = rules.find(node.text);
    if (it == rules.end()) {
      throw Error(ErrorCode::InvalidGrammar, "undefined rule '" + node.text + "'");
    }
    node.target = it->second.get();
  }
  for (auto& c : node.children) resolve(*c, rules);
}

void collect_refs(const Node& node, std::vector<std::string>& out) {
  if (node.kind == Node::Kind::Ref) out.push_back(node.text);
  for (const auto& c : node.children) collect_refs(*c, out);
}

void check_acyclic(const std::map<std::string, std::unique_ptr<Node>>& rules) {
  std::map<std::string, int> state;  // 1 = visiting, 2 = done
  std::function<void(const std::string&)> visit = [&](const std::string& name) {
    int& s = state[name];
    if (s == 2) return;
    if (s == 1) throw Error(ErrorCode::InvalidGrammar, "rule '" + name + "' is recursive");
    s = 1;
    std::vector<std::string> refs;
    collect_refs(*rules.at(name), refs);
    for (const auto& r : refs) visit(r);
    state[name] = 2;
  };
  for (const auto& [name, _] : rules) visit(name);
}

void sample_into(const Node& node, std::mt19937_64& rng, std::string& out) {
  switch (node.kind) {
    case Node::Kind::Literal: out += node.text; return;
    case Node::Kind::Ref: sample_into(*node.target, rng, out); return;
    case Node::Kind::Seq:
      for (const auto& c : node.children) sample_into(*c, rng, out);
      return;
    case Node::Kind::Alt: {
      std::uniform_int_distribution<std::size_t> pick(0, node.children.size() - 1);
      sample_into(*node.children[pick(rng)], rng, out);
      return;
    }
    case Node::Kind::Repeat: {
      std::uniform_int_distribution<int> n(node.min, node.max);
      const int times = n(rng);
      for (int i = 0; i < times; ++i) sample_into(*node.children.front(), rng, out);
      return;
    }
    case Node::Kind::Int: {
      const std::int64_t hi = node.hi < 0 ? node.lo + 99 : node.hi;
      std::uniform_int_distribution<std::int64_t> v(node.lo, hi);
      out += std::to_string(v(rng));
      return;
    }
    case Node::Kind::Word: {
      std::uniform_int_distribution<int> len(3, 8);
      std::uniform_int_distribution<int> letter(0, 25);
      std::string w;
      do {
        w.clear();
        const int n = len(rng);
        for (int i = 0; i < n; ++i) w.push_back(static_cast<char>('a' + letter(rng)));
      } while (w == "and" || w == "or");
      out += w;
      return;
    }
  }
}

class Recognizer {
 public:
  explicit Recognizer(std::string_view input) : input_(input) {}

  const std::vector<std::size_t>& match(const Node& node, std::size_t pos) {
    const auto key = std::make_pair(&node, pos);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    std::vector<std::size_t> ends = compute(node, pos);
    std::sort(ends.begin(), ends.end());
    ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
    return memo_[key] = std::move(ends);
  }

 private:
  std::vector<std::size_t> compute(const Node& node, std::size_t pos) {
    switch (node.kind) {
      case Node::Kind::Literal:
        if (input_.substr(pos, node.text.size()) == node.text) return {pos + node.text.size()};
        return {};
      case Node::Kind::Ref: return match(*node.target, pos);
      case Node::Kind::Seq: {
        std::vector<std::size_t> frontier{pos};
        for (const auto& c : node.children) {
          std::vector<std::size_t> next;
          for (auto p : frontier) {
            const auto& ends = match(*c, p);
            next.insert(next.end(), ends.begin(), ends.end());
          }
          std::sort(next.begin(), next.end());
          next.erase(std::unique(next.begin(), next.end()), next.end());
          frontier = std::move(next);
          if (frontier.empty()) break;
        }
        return frontier;
      }
      case Node::Kind::Alt: {
        std::vector<std::size_t> out;
        for (const auto& c : node.children) {
          const auto& ends = match(*c, pos);
          out.insert(out.end(), ends.begin(), ends.end());
        }
        return out;
      }
      case Node::Kind::Repeat: {
        std::vector<std::size_t> out;
        std::vector<std::size_t> frontier{pos};
        for (int i = 0; i <= node.max; ++i) {
          if (i >= node.min) out.insert(out.end(), frontier.begin(), frontier.end());
          if (i == node.max) break;
          std::vector<std::size_t> next;
          for (auto p : frontier) {
            const auto& ends = match(*node.children.front(), p);
            next.insert(next.end(), ends.begin(), ends.end());
          }
          std::sort(next.begin(), next.end());
          next.erase(std::unique(next.begin(), next.end()), next.end());
          frontier = std::move(next);
          if (frontier.empty()) break;
        }
        return out;
      }
      case Node::Kind::Int: {
        std::size_t j = pos;
        while (j < input_.size() && std::isdigit(static_cast<unsigned char>(input_[j]))) ++j;
        if (j == pos || j - pos > 18) return {};
        if (input_[pos] == '0' && j - pos > 1) return {};
        const std::int64_t v = std::stoll(std::string(input_.substr(pos, j - pos)));
        if (v < node.lo || (node.hi >= 0 && v > node.hi)) return {};
        return {j};
      }
      case Node::Kind::Word: {
        std::size_t j = pos;
        while (j < input_.size() && !std::isspace(static_cast<unsigned char>(input_[j]))) ++j;
        if (j == pos) return {};
        return {j};
      }
    }
    return {};
  }

  std::string_view input_;
  std::map<std::pair<const Node*, std::size_t>, std::vector<std::size_t>> memo_;
};

}  // namespace

Grammar::Grammar(const FormalGrammar& source) : impl_(std::make_unique<Impl>()) {
  impl_->rules = GrammarParser(tokenize(source.text)).run();
  for (auto& [_, body] : impl_->rules) resolve(*body, impl_->rules);
  check_acyclic(impl_->rules);
  auto it = impl_->rules.find(source.start_symbol);
  if (it == impl_->rules.end()) {
    throw Error(ErrorCode::InvalidGrammar, "start symbol '" + source.start_symbol + "' undefined");
  }
  impl_->start = it->second.get();
}

Grammar::~Grammar() = default;
Grammar::Grammar(Grammar&&) noexcept = default;
Grammar& Grammar::operator=(Grammar&&) noexcept = default;

std::string Grammar::sample(std::mt19937_64& rng) const {
  std::string out;
  sample_into(*impl_->start, rng, out);
  return out;
}

bool Grammar::derives(std::string_view s) const {
  Recognizer r(s);
  const auto& ends = r.match(*impl_->start, 0);
  return std::binary_search(ends.begin(), ends.end(), s.size());
}

std::size_t Grammar::rule_count() const noexcept { return impl_->rules.size(); }

}  // namespace xaichat
