#pragma once

#include <cstdint>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "xaichat/backends.hpp"
#include "xaichat/catalog.hpp"
#include "xaichat/datastore.hpp"
#include "xaichat/parsing.hpp"
#include "xaichat/query.hpp"

namespace xaichat {

enum class CotStrategy { ZeroCot, PlanAndSolve, Opro };
enum class ExpertiseLevel { Beginner, Intermediate, Expert };

std::string_view to_string(CotStrategy s);
std::string_view to_string(ExpertiseLevel l);
// Accept the enum spelling ("PlanAndSolve") and snake case ("plan_and_solve"). Throw Error(InvalidArgument).
CotStrategy cot_strategy_from_string(std::string_view s);
ExpertiseLevel expertise_from_string(std::string_view s);

// Prompt template name for a strategy, e.g. "rationalize_zero_cot".
std::string cot_template_name(CotStrategy s);

// Response templates: one file per key in a directory, surface variants separated by a line "---".
class ResponseTemplates {
 public:
  // Keys every directory must provide: all non-logic operations plus the auxiliary responses.
  static const std::vector<std::string>& required_keys();

  // Throws SchemaError when a required key is missing or a file has an empty variant.
  static ResponseTemplates load(const std::string& dir, const Catalog& catalog = default_catalog());
  explicit ResponseTemplates(std::map<std::string, std::vector<std::string>> variants);

  // Picks a variant uniformly with `rng` and fills it. Throws Error(NotFound) for unknown keys.
  std::string render(const std::string& key, const std::map<std::string, std::string>& values,
                     std::mt19937_64& rng) const;
  [[nodiscard]] const std::vector<std::string>& variants(const std::string& key) const;

 private:
  std::map<std::string, std::vector<std::string>> variants_;
};

// Text served by the meta operations; comes from the config file.
struct Metadata {
  std::string model_card = "A language model used through a text generation backend.";
  std::string self_description =
      "I am a conversational assistant that explains the predictions of a language model on a dataset.";
  std::string function_description =
      "You can ask me about predictions, mistakes and scores, feature attributions, rationales, "
      "counterfactuals, augmentations, similar instances, keywords and the dataset itself.";
  std::string websearch_notice = "Web search is disabled in this deployment.";
};

// ---------------------------------------------------------------------------
// Payloads
// ---------------------------------------------------------------------------

struct Prediction {
  std::int64_t id = 0;
  int label = -1;  // -1: generation did not name a label
  std::string label_name;
  std::string raw;
  bool from_cache = false;
};

struct PredictionList {
  std::vector<Prediction> predictions;
};

struct ScoreReport {
  std::string metric;
  double value = 0;
  std::int64_t n = 0;
  // Gold-label support in label order.
  std::vector<std::pair<std::string, std::int64_t>> support;
};

struct Mistake {
  std::int64_t id = 0;
  std::string gold;
  std::string predicted;
};

struct MistakeReport {
  std::string mode;
  std::int64_t count = 0;
  std::int64_t total = 0;
  std::vector<Mistake> mistakes;
};

struct AttributionReport {
  std::int64_t id = 0;
  AttributionResult result;
  // Indices into result.tokens, descending |score|, ties by position, clamped to topk.
  std::vector<std::size_t> top;
  bool available = true;
};

struct TextOutput {
  std::string kind;  // rationale, cfe, augment, tutorial
  std::optional<std::int64_t> id;
  std::string text;
  // Augment: fields of the candidate custom input. Cfe: the edited instance.
  std::optional<nlohmann::ordered_json> candidate;
  // Cfe: whether re-prediction flipped the label; nullopt when not checked.
  std::optional<bool> flip_confirmed;
};

struct InstanceList {
  std::vector<std::int64_t> ids;
  std::vector<double> scores;  // similarity only
};

struct Distribution {
  std::vector<std::pair<std::string, std::int64_t>> counts;
};

struct MetaText {
  std::string text;
};

struct CountValue {
  std::int64_t count = 0;
};

using Payload = std::variant<Prediction, PredictionList, ScoreReport, MistakeReport, AttributionReport, TextOutput,
                             InstanceList, Distribution, MetaText, CountValue>;

std::string_view payload_kind(const Payload& p);
nlohmann::ordered_json payload_json(const Payload& p);

struct BackendCall {
  std::string kind;  // generate, attribute
  std::string backend_id;
  std::string prompt;
  std::string output;
};

// Result of one operation over one scope.
struct OperationResult {
  std::string op;
  Payload payload;
  std::string response_text;
};

struct ExecutionResult {
  std::vector<OperationResult> steps;
  // Scope the filters established; empty when the query had no filters.
  std::vector<std::int64_t> scope;
  std::string response_text;
  std::vector<BackendCall> provenance;

  [[nodiscard]] const OperationResult& last() const { return steps.back(); }
};

// Session-owned state the executor reads and updates.
struct ExecutionContext {
  DataStore* store = nullptr;
  PredictionCache* cache = nullptr;
  const PromptStore* prompts = nullptr;
  std::mt19937_64* rng = nullptr;
  ExpertiseLevel expertise = ExpertiseLevel::Intermediate;
  CotStrategy cot = CotStrategy::ZeroCot;
  std::optional<std::int64_t> focus_id;
  bool verify_cfe = true;
};

struct ExecutorBackends {
  std::shared_ptr<GenerationBackend> generator;
  std::shared_ptr<AttributionBackend> attributor;  // optional
  std::shared_ptr<SimilarityService> similarity;
};

class Executor {
 public:
  static constexpr int kPredictTokens = 8;
  static constexpr int kTextTokens = 120;
  static constexpr std::size_t kKeywordCount = 10;

  Executor(ExecutorBackends backends, ResponseTemplates templates, Metadata metadata = {},
           const Catalog& catalog = default_catalog());

  // Filters first, then the operations left to right over the shared scope. Without filters
  // instance operations use ctx.focus_id and dataset operations the whole dataset.
  // Throws Error(EmptySubset) when an instance operation has no filter and no focus.
  ExecutionResult execute(const QueryAst& ast, ExecutionContext& ctx) const;

  // Individual operations; `calls` collects backend provenance.
  Prediction predict(const Instance& inst, ExecutionContext& ctx, std::vector<BackendCall>& calls) const;
  std::vector<Prediction> randompredict(std::int64_t n, ExecutionContext& ctx, std::vector<BackendCall>& calls) const;
  MistakeReport mistakes(const std::vector<const Instance*>& subset, const std::string& mode, ExecutionContext& ctx,
                         std::vector<BackendCall>& calls) const;
  ScoreReport score(const std::vector<const Instance*>& subset, const std::string& metric, ExecutionContext& ctx,
                    std::vector<BackendCall>& calls) const;
  AttributionReport nlpattribute(const Instance& inst, std::int64_t topk, const std::string& method,
                                 ExecutionContext& ctx, std::vector<BackendCall>& calls) const;
  TextOutput rationalize(const Instance& inst, ExecutionContext& ctx, std::vector<BackendCall>& calls) const;
  TextOutput augment(const Instance& inst, ExecutionContext& ctx, std::vector<BackendCall>& calls) const;
  // One augmentation attempt without the copy guard; first line of the generation.
  std::string paraphrase(const Instance& inst, std::uint64_t seed, ExecutionContext& ctx,
                         std::vector<BackendCall>& calls) const;
  // Predicted label bypassing the prediction cache; -1 when the generation names none.
  int classify(const Instance& inst, ExecutionContext& ctx, std::vector<BackendCall>& calls) const;
  TextOutput cfe(const Instance& inst, ExecutionContext& ctx, std::vector<BackendCall>& calls) const;
  // Throws Error(UnknownOperation) when op_name is not in the catalog.
  TextOutput qatutorial(const std::string& op_name, std::optional<ExpertiseLevel> level, ExecutionContext& ctx,
                        std::vector<BackendCall>& calls) const;

  // Prompt construction, exposed for the prompt editor and tests.
  std::string predict_prompt(const Instance& inst, const ExecutionContext& ctx) const;
  std::string rationalize_prompt(const Instance& inst, const std::string& prediction,
                                 const ExecutionContext& ctx) const;
  std::string preamble(ExpertiseLevel level, const ExecutionContext& ctx) const;

  [[nodiscard]] const ResponseTemplates& templates() const noexcept { return templates_; }
  [[nodiscard]] const Metadata& metadata() const noexcept { return metadata_; }

 private:
  std::vector<OperationResult> run(const OpNode& node, const std::vector<const Instance*>& scope, bool filtered,
                                   ExecutionContext& ctx, std::vector<BackendCall>& calls) const;
  OperationResult run_on_instance(const OpNode& node, const Instance& inst, ExecutionContext& ctx,
                                  std::vector<BackendCall>& calls) const;
  std::string generate(const std::string& prompt, int max_tokens, std::uint64_t seed, std::vector<BackendCall>& calls) const;
  std::string render(const std::string& key, const std::map<std::string, std::string>& values,
                     ExecutionContext& ctx) const;

  ExecutorBackends backends_;
  ResponseTemplates templates_;
  Metadata metadata_;
  const Catalog& catalog_;
};

// Label a free generation names: longest case-insensitive label-name match; single-character
// labels and answer choices must stand alone as a word. nullopt when nothing matches.
std::optional<int> map_label(std::string_view generation, const Dataset& ds, const Instance& inst);

// Copy of `inst` as a custom input whose primary text (claim or question) is `replacement`.
Instance with_primary(const Instance& inst, const std::string& replacement);

// Macro averages over the labels that occur in gold or predictions; unknown predictions count
// as a miss for their gold label. Only instances with gold labels are scored.
double macro_metric(const std::string& metric, const std::vector<int>& gold, const std::vector<int>& predicted);

}  // namespace xaichat
