#pragma once

#include <cstdint>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xaichat/backends.hpp"
#include "xaichat/catalog.hpp"
#include "xaichat/datastore.hpp"
#include "xaichat/errors.hpp"
#include "xaichat/executor.hpp"
#include "xaichat/parsing.hpp"

namespace xaichat {

class InvalidGoldParse : public Error {
 public:
  InvalidGoldParse(std::size_t line, const std::string& reason)
      : Error(ErrorCode::InvalidGoldParse, "line " + std::to_string(line) + ": " + reason), line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct GoldPair {
  std::string utterance;
  std::string gold_parse;  // canonical render
  std::size_t line = 0;
};

struct Goldset {
  static constexpr std::size_t kMinPerOperation = 3;

  std::vector<GoldPair> pairs;
  // Occurrences per main operation (every op named in a gold parse counts).
  std::map<std::string, std::size_t> op_counts;
  // One entry per operation seen fewer than kMinPerOperation times.
  std::vector<std::string> warnings;

  [[nodiscard]] std::size_t covered_operations() const;
};

// JSONL of {"utterance", "parse"}. Gold parses must validate against a dataset of
// `dataset_size` instances with no dialogue focus. Throws SchemaError and InvalidGoldParse.
Goldset build_goldset(const std::string& path, std::int64_t dataset_size, const Catalog& catalog = default_catalog());
Goldset parse_goldset(std::string_view jsonl, std::int64_t dataset_size, const Catalog& catalog = default_catalog());

struct EvalFailure {
  std::size_t index = 0;
  std::string utterance;
  std::string gold;
  std::string predicted;  // empty when parsing failed
  std::string error;      // error code name, empty for a clean mismatch
};

struct EvalReport {
  Strategy strategy = Strategy::GD;
  std::string backend_id;
  int max_new_tokens = 10;
  std::size_t total = 0;
  std::size_t matches = 0;
  double exact_match_accuracy = 0;  // matches / total
  // gold main op -> predicted main op -> count; "<none>" when nothing parsed.
  std::map<std::string, std::map<std::string, std::size_t>> confusion;
  std::vector<EvalFailure> failures;

  [[nodiscard]] std::string accuracy_percent() const;  // two decimals, e.g. "75.00"
};

struct EvalOptions {
  std::int64_t dataset_size = 60;
  int max_new_tokens = 10;
  bool small_model = false;
  // Parses run on this many threads; the report is ordered by goldset index either way.
  std::size_t parallelism = 1;
};

// Operation a query is about: the last one named, or "<none>".
std::string main_operation(const QueryAst& ast);

// Parse errors count as mismatches.
EvalReport eval_parsing(const Goldset& gold, Strategy strategy, const ParsingEngine& engine, const PromptStore& prompts,
                        const EvalOptions& options, const std::string& backend_id);

inline const std::vector<int>& sweep_max_new_tokens() {
  static const std::vector<int> v{10, 20};
  return v;
}

std::vector<EvalReport> eval_parsing_sweep(const Goldset& gold, Strategy strategy, const ParsingEngine& engine,
                                           const PromptStore& prompts, EvalOptions options,
                                           const std::string& backend_id);

struct AugmentationItem {
  std::int64_t id = 0;
  std::string original;
  std::string augmented;
  int original_label = -1;
  int augmented_label = -1;
  double similarity = 0;
};

struct AugmentationReport {
  double consistency = 0;  // fraction with equal, known predicted labels
  double fluency = 0;      // mean similarity(original, augmented)
  std::size_t n = 0;
  std::vector<AugmentationItem> items;
};

// Samples n instances with `seed`, paraphrases each and predicts original and paraphrase.
// Consistency and fluency are computed over the same sample. Throws Error(RangeError) when
// n is 0 or exceeds the dataset, and propagates backend failures.
AugmentationReport eval_augmentation(std::shared_ptr<const Dataset> dataset, const Executor& executor,
                                     const PromptStore& prompts, SimilarityService& similarity, std::size_t n,
                                     std::uint64_t seed);

nlohmann::ordered_json report_json(const EvalReport& r);
nlohmann::ordered_json report_json(const std::vector<EvalReport>& rs);
nlohmann::ordered_json report_json(const AugmentationReport& r);

// format is "text" or "json"; throws Error(InvalidArgument) otherwise.
std::string render_report(const std::vector<EvalReport>& rs, const std::string& format);
std::string render_report(const AugmentationReport& r, const std::string& format);

}  // namespace xaichat
