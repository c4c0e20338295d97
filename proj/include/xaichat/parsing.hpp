#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xaichat/backends.hpp"
#include "xaichat/catalog.hpp"
#include "xaichat/errors.hpp"
#include "xaichat/query.hpp"

namespace xaichat {

struct Demonstration {
  std::string utterance;
  // Canonical query for parse demonstrations, an operation name for stage-1 demonstrations.
  std::string parse;
};

// Prompt templates and demonstration pools, loaded from a directory (docs/prompts.md).
class PromptStore {
 public:
  static constexpr std::size_t kMinGdPool = 20;
  static constexpr std::size_t kMinStage2 = 2;
  static constexpr std::size_t kMaxStage2 = 7;

  // Throws SchemaError when a file is missing or breaks a store invariant.
  static PromptStore load(const std::string& dir, const Catalog& catalog = default_catalog());

  [[nodiscard]] const std::vector<Demonstration>& gd_pool() const noexcept { return gd_pool_; }
  [[nodiscard]] const std::vector<Demonstration>& stage1_demos() const noexcept { return stage1_; }
  // Throws Error(NotFound) for an operation without stage-2 demonstrations.
  [[nodiscard]] const std::vector<Demonstration>& stage2_demos(const std::string& op) const;

  // Throws Error(NotFound).
  [[nodiscard]] const std::string& get_template(const std::string& name) const;
  [[nodiscard]] const std::map<std::string, std::string>& templates() const noexcept { return templates_; }

  // Copy with some templates replaced. Throws Error(InvalidArgument) for unknown names or
  // overrides that drop a required placeholder.
  [[nodiscard]] PromptStore with_overrides(const std::map<std::string, std::string>& overrides) const;

  // Placeholders a template must keep, e.g. {"demonstrations", "utterance"} for "gd".
  static std::vector<std::string> required_placeholders(const std::string& name);

  // Used by tests and tools that build stores in memory.
  PromptStore(std::map<std::string, std::string> templates, std::vector<Demonstration> gd_pool,
              std::vector<Demonstration> stage1, std::map<std::string, std::vector<Demonstration>> stage2);

 private:
  std::map<std::string, std::string> templates_;
  std::vector<Demonstration> gd_pool_;
  std::vector<Demonstration> stage1_;
  std::map<std::string, std::vector<Demonstration>> stage2_;
};

enum class Strategy { GD, MP, NearestNeighbor };
enum class Repair { FuzzyOpMatch, IdHallucinationRemoved, IdExtractedFromUtterance, DefaultsFilled };

std::string_view to_string(Strategy s);
std::string_view to_string(Repair r);
// Accepts "gd", "mp", "nn" (case-insensitive). Throws Error(InvalidArgument).
Strategy strategy_from_string(std::string_view s);

struct ParseContext {
  std::int64_t dataset_size = 0;
  std::vector<std::int64_t> custom_input_ids;
  // Most recent ById of the dialogue; "this instance" refers to it.
  std::optional<std::int64_t> focus_id;
  std::optional<std::string> last_op;
  int max_new_tokens = 10;
  // Enables the regex id-extraction pass.
  bool small_model = false;
  // Whitespace-token budget for a whole few-shot prompt.
  std::size_t prompt_budget = 2048;
};

struct ParseResult {
  QueryAst ast;
  Strategy strategy = Strategy::GD;
  std::vector<std::string> raw;
  std::vector<Repair> repairs;
  std::optional<double> confidence;
  // Stage-1 operation of a multi-prompt parse.
  std::optional<std::string> main_op;

  [[nodiscard]] std::string canonical() const { return render_query(ast); }
  [[nodiscard]] bool has_repair(Repair r) const;
};

// Raised when every rung of the repair ladder fails.
class ParseFailure : public Error {
 public:
  ParseFailure(const std::string& message, Strategy strategy, std::vector<std::string> raw)
      : Error(ErrorCode::Unparseable, message), strategy_(strategy), raw_(std::move(raw)) {}
  [[nodiscard]] Strategy strategy() const noexcept { return strategy_; }
  [[nodiscard]] const std::vector<std::string>& raw() const noexcept { return raw_; }

 private:
  Strategy strategy_;
  std::vector<std::string> raw_;
};

// Instance id named in an utterance ("id 42", "instance #7", ...), if any.
std::optional<std::int64_t> extract_instance_id(std::string_view utterance);

// True when ById(id) is justified by the utterance, a custom input or the dialogue focus.
bool id_is_grounded(std::int64_t id, std::string_view utterance, const ParseContext& ctx);

// Stage-1 operation listing: one "name: description" line per main operation.
std::string operations_listing(const Catalog& catalog);

class ParsingEngine {
 public:
  static constexpr std::size_t kGdShots = 20;
  static constexpr double kFuzzyThreshold = 0.35;

  ParsingEngine(std::shared_ptr<GenerationBackend> generator, std::shared_ptr<SimilarityService> similarity,
                const Catalog& catalog = default_catalog());

  // All throw ParseFailure (Error(Unparseable)); parse_nn never throws.
  ParseResult parse(Strategy strategy, const std::string& utterance, const PromptStore& store,
                    const ParseContext& ctx) const;
  ParseResult parse_gd(const std::string& utterance, const PromptStore& store, const ParseContext& ctx) const;
  ParseResult parse_mp(const std::string& utterance, const PromptStore& store, const ParseContext& ctx) const;
  ParseResult parse_nn(const std::string& utterance, const PromptStore& store, const ParseContext& ctx) const;

  // Demonstrations chosen for a GD prompt, most similar first, after budget truncation.
  [[nodiscard]] std::vector<Demonstration> select_gd_demos(const std::string& utterance, const PromptStore& store,
                                                           const ParseContext& ctx) const;
  [[nodiscard]] std::string build_gd_prompt(const std::string& utterance, const PromptStore& store,
                                            const ParseContext& ctx) const;
  [[nodiscard]] std::string build_stage1_prompt(const std::string& utterance, const PromptStore& store) const;
  [[nodiscard]] std::string build_stage2_prompt(const std::string& utterance, const std::string& op,
                                                const PromptStore& store) const;

  // Stage-1 output -> operation name, with fuzzy matching. nullopt below the threshold.
  [[nodiscard]] std::optional<std::pair<std::string, bool>> resolve_operation(const std::string& raw,
                                                                              double* score = nullptr) const;

 private:
  std::optional<QueryAst> repair(const std::string& raw, const std::string& utterance, const ParseContext& ctx,
                                 std::vector<Repair>& repairs) const;
  bool finish(QueryAst& ast, const std::string& utterance, const ParseContext& ctx,
              std::vector<Repair>& repairs) const;

  std::shared_ptr<GenerationBackend> generator_;
  std::shared_ptr<SimilarityService> similarity_;
  const Catalog& catalog_;
};

std::string format_demonstrations(const std::vector<Demonstration>& demos);

}  // namespace xaichat
