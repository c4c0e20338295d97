#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "xaichat/catalog.hpp"

namespace xaichat {

// Grammar source in the project's EBNF dialect (see docs/grammar.md).
struct FormalGrammar {
  std::string text;
  std::string start_symbol = "root";
};

struct GrammarContext {
  std::int64_t dataset_size = 0;
  std::vector<std::int64_t> custom_input_ids;
  bool focus_available = false;
  std::vector<std::string> methods{std::begin(kAttributionMethods), std::end(kAttributionMethods)};
  std::vector<std::string> metrics{std::begin(kMetrics), std::end(kMetrics)};
  int max_filters = 3;
  int max_operations = 3;
};

// Grammar whose language is the set of canonical queries that validate under `context`.
// Throws Error(EmptyContext) when no instance id is addressable, Error(InvalidArgument) for
// methods or metrics outside their enums.
FormalGrammar compile_grammar(const Catalog& catalog, const GrammarContext& context);

// Compiled, immutable form of a FormalGrammar: samples strings and recognizes them.
class Grammar {
 public:
  // Throws Error(InvalidGrammar) on syntax errors, undefined rules and recursion.
  explicit Grammar(const FormalGrammar& source);
  ~Grammar();
  Grammar(Grammar&&) noexcept;
  Grammar& operator=(Grammar&&) noexcept;

  [[nodiscard]] std::string sample(std::mt19937_64& rng) const;
  [[nodiscard]] bool derives(std::string_view s) const;
  [[nodiscard]] std::size_t rule_count() const noexcept;

  struct Node;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace xaichat
