#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xaichat {

enum class FinishReason { Stop, Length, Grammar };

std::string_view to_string(FinishReason r);
FinishReason finish_reason_from_string(std::string_view s);

struct GenerationRequest {
  std::string prompt;
  int max_new_tokens = 10;
  std::vector<std::string> stop_sequences;
  double temperature = 0.0;
  std::optional<std::string> grammar;
  std::optional<std::uint64_t> seed;
};

struct GenerationResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::Stop;
  std::string backend_id;
};

struct EmbeddingVector {
  std::vector<double> values;
  [[nodiscard]] std::size_t dim() const noexcept { return values.size(); }
};

struct AttributionResult {
  std::vector<std::string> tokens;
  std::vector<double> scores;
  std::string method;
  std::optional<std::int64_t> instance_id;
};

// Throws Error(InvalidArgument) on max_new_tokens < 1 or negative temperature.
void check_request(const GenerationRequest& req);

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  // Throws Error(Timeout), Error(BackendUnavailable) or Error(GrammarUnsupported).
  virtual GenerationResponse generate(const GenerationRequest& req) = 0;
  [[nodiscard]] virtual bool supports_grammar() const noexcept = 0;
  [[nodiscard]] virtual std::string backend_id() const = 0;
  [[nodiscard]] virtual bool reachable() { return true; }
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
  [[nodiscard]] virtual std::string backend_id() const = 0;
  [[nodiscard]] virtual bool reachable() { return true; }
};

class AttributionBackend {
 public:
  virtual ~AttributionBackend() = default;
  virtual AttributionResult attribute(const std::string& input, const std::string& target,
                                      const std::string& method) = 0;
  [[nodiscard]] virtual std::string backend_id() const = 0;
  [[nodiscard]] virtual bool reachable() { return true; }
};

// ---------------------------------------------------------------------------
// Mocks
// ---------------------------------------------------------------------------

// The utterance slot of a prompt: text after the last line starting with "Input:".
std::string prompt_input(std::string_view prompt);

// Output line paired with an earlier "Input:" line equal to the final one, if any.
std::optional<std::string> demonstrated_output(std::string_view prompt);

// One scripted completion. All present conditions must hold.
struct MockRule {
  std::optional<std::string> when_prompt_contains;
  std::optional<std::string> when_input_matches;  // ECMAScript regex, case-insensitive, full match
  std::optional<std::string> when_input_equals;   // compared after trim + lowercase
  // With when_input_matches, $1..$9 expand to capture groups and $$ to a literal '$'.
  std::string completion;
};

// Rule-table generator. Tokens are whitespace-separated words.
class MockGenerator final : public GenerationBackend {
 public:
  static constexpr std::string_view kSentinel = "<no scripted completion>";

  using Handler = std::function<std::optional<std::string>(const GenerationRequest&)>;

  explicit MockGenerator(bool supports_grammar = true, std::string backend_id = "mock");

  // Reads {"backend_id", "supports_grammar", "echo_demonstrations", "rules": [...]} (see docs/wire_protocol.md).
  static std::shared_ptr<MockGenerator> from_script(const std::string& path);
  static std::shared_ptr<MockGenerator> from_json(std::string_view json_text);

  void add_rule(MockRule rule);
  // When no rule matches and the final input repeats a demonstrated input, answer with that
  // demonstration's output.
  void set_echo_demonstrations(bool on) noexcept { echo_demos_ = on; }
  // Consulted before the rule table; returning nullopt defers to the rules.
  void set_handler(Handler handler);

  GenerationResponse generate(const GenerationRequest& req) override;
  [[nodiscard]] bool supports_grammar() const noexcept override { return supports_grammar_; }
  [[nodiscard]] std::string backend_id() const override { return backend_id_; }

  [[nodiscard]] std::size_t call_count() const noexcept { return calls_.load(); }

 private:
  struct CompiledRule {
    MockRule rule;
    std::optional<std::regex> pattern;
  };

  std::optional<std::string> lookup(const GenerationRequest& req) const;

  bool supports_grammar_;
  bool echo_demos_ = false;
  std::string backend_id_;
  std::vector<CompiledRule> rules_;
  Handler handler_;
  std::atomic<std::size_t> calls_{0};
};

// Hashed character-trigram count vectors.
class MockEmbedder final : public EmbeddingBackend {
 public:
  static constexpr std::size_t kDim = 512;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  [[nodiscard]] std::string backend_id() const override { return "mock-trigram"; }
  static EmbeddingVector embed_one(std::string_view text);
};

// Uniform 1/n over whitespace tokens.
class MockAttributor final : public AttributionBackend {
 public:
  AttributionResult attribute(const std::string& input, const std::string& target,
                              const std::string& method) override;
  [[nodiscard]] std::string backend_id() const override { return "mock-uniform"; }
};

// ---------------------------------------------------------------------------
// HTTP clients for the /v1 protocol
// ---------------------------------------------------------------------------

struct HttpEndpoint {
  std::string base_url;  // scheme://host:port
  std::chrono::milliseconds timeout{30000};
  int retries = 0;
};

class HttpGenerator final : public GenerationBackend {
 public:
  HttpGenerator(HttpEndpoint endpoint, bool supports_grammar, std::string backend_id = "http");
  GenerationResponse generate(const GenerationRequest& req) override;
  [[nodiscard]] bool supports_grammar() const noexcept override { return supports_grammar_; }
  [[nodiscard]] std::string backend_id() const override { return backend_id_; }
  [[nodiscard]] bool reachable() override;

 private:
  HttpEndpoint endpoint_;
  bool supports_grammar_;
  std::string backend_id_;
};

class HttpEmbedder final : public EmbeddingBackend {
 public:
  explicit HttpEmbedder(HttpEndpoint endpoint);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  [[nodiscard]] std::string backend_id() const override { return "http-embed"; }
  [[nodiscard]] bool reachable() override;

 private:
  HttpEndpoint endpoint_;
  std::atomic<std::size_t> dim_{0};
};

class HttpAttributor final : public AttributionBackend {
 public:
  explicit HttpAttributor(HttpEndpoint endpoint);
  AttributionResult attribute(const std::string& input, const std::string& target,
                              const std::string& method) override;
  [[nodiscard]] std::string backend_id() const override { return "http-attribute"; }
  [[nodiscard]] bool reachable() override;

 private:
  HttpEndpoint endpoint_;
};

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

// Throws Error(DimensionMismatch). Zero vectors have similarity 0.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

// 0.5 * token-set Jaccard + 0.5 * (1 - levenshtein / max length), on lowercased text.
double lexical_similarity(std::string_view a, std::string_view b);

// Embedding cosine with a lexical fallback when no embedder is configured or it fails.
class SimilarityService {
 public:
  explicit SimilarityService(std::shared_ptr<EmbeddingBackend> embedder = nullptr);

  double similarity(const std::string& a, const std::string& b);
  std::vector<double> similarities(const std::string& query, const std::vector<std::string>& candidates);

  [[nodiscard]] bool has_embedder() const noexcept { return embedder_ != nullptr; }
  // True when the last call used the lexical fallback.
  [[nodiscard]] bool used_fallback() const noexcept { return fallback_.load(); }

 private:
  std::optional<std::vector<EmbeddingVector>> try_embed(const std::vector<std::string>& texts);

  std::shared_ptr<EmbeddingBackend> embedder_;
  std::mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
  std::atomic<bool> fallback_{false};
};

}  // namespace xaichat
