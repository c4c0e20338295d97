#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xaichat/query.hpp"

namespace xaichat {

class SimilarityService;

enum class Task { FactChecking, CommonsenseQA };
enum class Source { Dataset, CustomInput };

std::string_view to_string(Task t);
Task task_from_string(std::string_view s);

struct Instance {
  std::int64_t id = 0;
  // Text fields in schema order: claim, evidence / question (+ optional explanations).
  std::vector<std::pair<std::string, std::string>> fields;
  // Answer choices (commonsense QA only).
  std::vector<std::string> choices;
  std::optional<int> gold_label;
  Source source = Source::Dataset;

  [[nodiscard]] const std::string* field(std::string_view name) const;
  // claim or question: the span perturbation operations rewrite.
  [[nodiscard]] const std::string& primary_text() const;
  // Every text field and choice, space-joined; what token filters and keywords see.
  [[nodiscard]] std::string searchable_text() const;
};

struct Dataset {
  std::string name;
  Task task = Task::FactChecking;
  std::vector<Instance> instances;
  std::vector<std::string> label_names;
  std::string description;

  [[nodiscard]] std::int64_t size() const noexcept { return static_cast<std::int64_t>(instances.size()); }
  [[nodiscard]] std::string label_name(std::optional<int> label) const;
  // Index of `name` (case-insensitive) in label_names, or nullopt.
  [[nodiscard]] std::optional<int> label_index(std::string_view name) const;
};

// JSONL: optional {"_meta": {...}} header, then one row per instance (docs/dataset_format.md).
// Throws SchemaError(line, reason) and Error(EmptyDataset).
Dataset load_dataset(const std::string& path);
Dataset parse_dataset(std::string_view jsonl, const std::string& name = "dataset");

// Prompt-ready rendering of an instance ("Claim: ...\nEvidence: ...").
std::string instance_prompt_text(const Dataset& ds, const Instance& inst);

nlohmann::ordered_json instance_json(const Dataset& ds, const Instance& inst);

// One session's view of a dataset: the shared immutable corpus plus its own custom inputs.
class DataStore {
 public:
  explicit DataStore(std::shared_ptr<const Dataset> dataset);

  [[nodiscard]] const Dataset& dataset() const noexcept { return *dataset_; }
  [[nodiscard]] std::shared_ptr<const Dataset> shared_dataset() const noexcept { return dataset_; }
  [[nodiscard]] std::int64_t dataset_size() const noexcept { return dataset_->size(); }
  [[nodiscard]] std::vector<std::int64_t> custom_input_ids() const;
  [[nodiscard]] bool contains(std::int64_t id) const;

  // Throws Error(IdNotFound).
  [[nodiscard]] const Instance& get(std::int64_t id) const;
  // Dataset instances in id order (custom inputs excluded).
  [[nodiscard]] std::vector<const Instance*> all() const;

  // ById matches dataset and custom ids; Includes scans dataset instances for a whole token.
  // Or is union, And is intersection; results ordered by id. Throws Error(IdNotFound).
  [[nodiscard]] std::vector<const Instance*> filter(const std::vector<FilterNode>& filters,
                                                    Connective connective) const;

  // `fields` follows the row schema without id/label. Throws SchemaError.
  const Instance& add_custom_input(const nlohmann::json& fields);
  [[nodiscard]] std::vector<nlohmann::json> custom_input_history() const;

  // Appends every later custom input to this JSONL file.
  void set_history_file(std::string path);
  // Re-adds the custom inputs recorded in a history file.
  void replay_history(const std::string& path);

 private:
  std::shared_ptr<const Dataset> dataset_;
  mutable std::mutex mu_;
  std::deque<Instance> custom_;
  std::vector<nlohmann::json> history_;
  std::string history_file_;
};

inline constexpr std::size_t kShowPageSize = 10;

// Gold-label counts in label order; unlabeled instances are counted under "unlabeled".
std::vector<std::pair<std::string, std::int64_t>> label_distribution(const Dataset& ds,
                                                                     const std::vector<const Instance*>& subset);
std::int64_t countdata(const std::vector<const Instance*>& subset) noexcept;
std::string show(const Dataset& ds, const std::vector<const Instance*>& subset, std::size_t offset = 0);

bool is_stopword(std::string_view token);

// Top-k non-stopword tokens by frequency, ties broken lexicographically.
std::vector<std::pair<std::string, std::int64_t>> keywords(const std::vector<const Instance*>& subset,
                                                           std::size_t k);

// k dataset instances most similar to `anchor` (anchor excluded), descending score, ties by id.
std::vector<std::pair<const Instance*, double>> similar_topk(const DataStore& store, const Instance& anchor,
                                                             std::size_t k, SimilarityService& sim);

struct CachedPrediction {
  int label = -1;  // index in label_names, -1 for unknown
  std::string raw;
  std::chrono::system_clock::time_point at;
};

class PredictionCache {
 public:
  [[nodiscard]] std::optional<CachedPrediction> get(std::int64_t id) const;
  // Keeps the existing entry when one is present; returns the stored entry.
  CachedPrediction insert_or_get(std::int64_t id, CachedPrediction p);
  [[nodiscard]] std::size_t size() const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::map<std::int64_t, CachedPrediction> entries_;
};

}  // namespace xaichat
