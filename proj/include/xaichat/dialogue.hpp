#pragma once

#include <chrono>
#include <cstdint>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "xaichat/backends.hpp"
#include "xaichat/catalog.hpp"
#include "xaichat/datastore.hpp"
#include "xaichat/executor.hpp"
#include "xaichat/parsing.hpp"

namespace xaichat {

// ---------------------------------------------------------------------------
// Confirmation detection
// ---------------------------------------------------------------------------

enum class Confirmation { Confirm, Decline, Other };
std::string_view to_string(Confirmation c);

struct ConfirmationResult {
  Confirmation kind = Confirmation::Other;
  double confirm_score = 0;
  double decline_score = 0;
  // Text after a leading "yes," / "no," clause; parsed as a request of its own.
  std::string remainder;
};

class ConfirmationDetector {
 public:
  static constexpr double kThreshold = 0.6;
  static const std::vector<std::string>& confirm_templates();
  static const std::vector<std::string>& decline_templates();

  explicit ConfirmationDetector(std::shared_ptr<SimilarityService> similarity, double threshold = kThreshold);

  // Scores the whole text and its leading clause against both template sets.
  ConfirmationResult detect(const std::string& text) const;

 private:
  std::pair<double, double> scores(const std::string& text) const;

  std::shared_ptr<SimilarityService> similarity_;
  double threshold_;
};

// ---------------------------------------------------------------------------
// Follow-up suggestions
// ---------------------------------------------------------------------------

struct SuggestionPhrase {
  std::string offer;     // assistant wording, may contain {id}
  std::string question;  // user wording a suggestion chip posts, may contain {id}
};

struct Suggestion {
  std::string op;
  std::string offer;
  std::string question;
  std::string query;  // canonical query run on confirmation
};

// Priority-ordered follow-up candidates per operation.
class SuggestionGraph {
 public:
  // Same-category operations first, then cross-category edges.
  static SuggestionGraph standard(const Catalog& catalog = default_catalog());
  SuggestionGraph(std::map<std::string, std::vector<std::string>> edges, const Catalog& catalog);

  [[nodiscard]] const std::vector<std::string>& candidates(const std::string& op) const;
  [[nodiscard]] const std::map<std::string, std::vector<std::string>>& edges() const noexcept { return edges_; }

 private:
  std::map<std::string, std::vector<std::string>> edges_;
};

// Reads {"op": {"offer": ..., "question": ...}} and requires an entry for every main operation.
std::map<std::string, SuggestionPhrase> load_suggestion_phrases(const std::string& path,
                                                                 const Catalog& catalog = default_catalog());

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

struct SessionSettings {
  ExpertiseLevel expertise = ExpertiseLevel::Intermediate;
  CotStrategy cot = CotStrategy::ZeroCot;
  Strategy parsing = Strategy::MP;
  std::map<std::string, std::string> prompt_overrides;

  bool operator==(const SessionSettings&) const = default;
};

nlohmann::ordered_json settings_json(const SessionSettings& s);
// Applies the keys present in `patch` (expertise, cot_strategy, parsing_strategy, prompt_overrides).
// Throws Error(InvalidArgument) for bad values.
SessionSettings apply_settings(SessionSettings base, const nlohmann::json& patch);

enum class TurnKind { Executed, Clarification, Declined };
std::string_view to_string(TurnKind k);

struct Turn {
  std::string user_text;
  TurnKind kind = TurnKind::Executed;
  std::optional<std::string> parse;  // canonical query that ran
  std::optional<Strategy> strategy;  // nullopt when a confirmed suggestion ran
  std::vector<Repair> repairs;
  std::optional<ExecutionResult> execution;
  std::optional<std::string> clarification;
  std::string response_text;
  std::optional<Suggestion> suggestion;
  SessionSettings settings;
  std::string dataset;
  std::chrono::system_clock::time_point started;
  std::chrono::system_clock::time_point finished;
};

struct DialogueConfig {
  int max_new_tokens = 10;
  bool small_model = false;
  bool verify_cfe = true;
  Strategy default_strategy = Strategy::MP;
};

// Shared, read-only services every session uses.
struct DialogueServices {
  const Catalog* catalog = &default_catalog();
  std::shared_ptr<ParsingEngine> parser;
  std::shared_ptr<Executor> executor;
  std::shared_ptr<SimilarityService> similarity;
  std::shared_ptr<const PromptStore> prompts;
  std::map<std::string, std::shared_ptr<const Dataset>> datasets;
  // New sessions start here; the first dataset by name when empty.
  std::string active_dataset;
  std::map<std::string, SuggestionPhrase> phrases;
  SuggestionGraph graph = SuggestionGraph::standard();
  DialogueConfig config;
};

class Session {
 public:
  static constexpr int kSchemaVersion = 1;

  Session(std::string id, std::shared_ptr<const DialogueServices> services, const std::string& dataset,
          std::uint64_t rng_seed);

  // Never fails on bad input: unparseable text becomes a clarification turn. Backend failures
  // propagate (Error(BackendUnavailable) / Error(Timeout)) and leave the session unchanged.
  const Turn& handle_turn(const std::string& user_text);

  void update_settings(const SessionSettings& s);
  // Resets focus, predictions and the suggestion history. Throws Error(NotFound).
  void switch_dataset(const std::string& name);
  // Throws SchemaError.
  const Instance& add_custom_input(const nlohmann::json& fields);

  // Highest-priority follow-up for `op` that was neither suggested nor executed.
  [[nodiscard]] std::optional<Suggestion> suggest_followup(const std::string& op) const;

  [[nodiscard]] nlohmann::ordered_json export_json() const;
  [[nodiscard]] std::string export_text() const;  // 2-space indented, trailing newline

  // Re-executes every exported turn in a fresh session (same seed, settings and custom inputs).
  static std::unique_ptr<Session> replay(const nlohmann::json& doc, std::shared_ptr<const DialogueServices> services);
  // Rebuilds a read-only copy of the exported turns without backend calls.
  static std::unique_ptr<Session> restore(const nlohmann::json& doc, std::shared_ptr<const DialogueServices> services);

  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  [[nodiscard]] const std::vector<Turn>& turns() const noexcept { return turns_; }
  [[nodiscard]] const SessionSettings& settings() const noexcept { return settings_; }
  [[nodiscard]] const std::string& dataset_name() const noexcept { return dataset_name_; }
  [[nodiscard]] std::optional<std::int64_t> focus_id() const noexcept { return focus_; }
  [[nodiscard]] const std::vector<std::string>& suggestion_history() const noexcept { return suggested_; }
  [[nodiscard]] const std::set<std::string>& executed_ops() const noexcept { return executed_; }
  [[nodiscard]] const std::optional<Suggestion>& pending_suggestion() const noexcept { return pending_; }
  [[nodiscard]] DataStore& store() noexcept { return *store_; }
  [[nodiscard]] const PromptStore& effective_prompts() const noexcept { return *effective_prompts_; }
  // Serializes callers that touch the session from several threads.
  [[nodiscard]] std::mutex& mutex() noexcept { return mu_; }

 private:
  Turn run_query(const std::string& user_text, const QueryAst& ast);
  Turn clarification(const std::string& user_text, const std::string& reason);
  std::string examples_for(const std::string& user_text) const;
  ParseContext parse_context() const;
  void after_execution(Turn& turn, const QueryAst& ast);
  void record(Turn turn);

  std::string id_;
  std::shared_ptr<const DialogueServices> services_;
  std::string dataset_name_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  SessionSettings settings_;
  std::shared_ptr<const PromptStore> effective_prompts_;
  std::unique_ptr<DataStore> store_;
  PredictionCache cache_;
  std::optional<std::int64_t> focus_;
  std::optional<std::string> last_op_;
  std::optional<Suggestion> pending_;
  std::vector<std::string> suggested_;
  std::set<std::string> executed_;
  std::vector<Turn> turns_;
  std::vector<std::pair<std::size_t, nlohmann::ordered_json>> custom_inputs_;  // (turns before, fields)
  std::mutex mu_;
};

// Owns live sessions; optionally mirrors each export into <dir>/<id>.json.
class SessionStore {
 public:
  explicit SessionStore(std::shared_ptr<const DialogueServices> services, std::optional<std::string> snapshot_dir = {},
                        std::uint64_t base_seed = 0);

  // Random 128-bit hex id. Throws Error(NotFound) for unknown datasets.
  std::shared_ptr<Session> create(const std::optional<std::string>& dataset = {});
  // Throws Error(NotFound).
  std::shared_ptr<Session> get(const std::string& id) const;
  void snapshot(const Session& session) const;
  // Restores every snapshot in the directory; returns how many were loaded.
  std::size_t load_snapshots();
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] const DialogueServices& services() const noexcept { return *services_; }
  [[nodiscard]] std::string default_dataset() const;

 private:
  std::shared_ptr<const DialogueServices> services_;
  std::optional<std::string> dir_;
  std::uint64_t base_seed_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mt19937_64 id_rng_;
  std::uint64_t created_ = 0;
};

}  // namespace xaichat
