#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "xaichat/backends.hpp"
#include "xaichat/dialogue.hpp"
#include "xaichat/executor.hpp"
#include "xaichat/parsing.hpp"

namespace xaichat {

// kind: "mock" (scripted, in process), "http" (a /v1 service) or "none" (embedder and attributor only).
struct BackendSettings {
  std::string kind = "mock";
  std::string url;
  int timeout_ms = 30000;
  int retries = 0;
  bool supports_grammar = true;
  std::string script;  // mock generator script, optional
};

struct AppConfig {
  BackendSettings generator;
  BackendSettings embedder;
  BackendSettings attributor;

  std::map<std::string, std::string> datasets;  // name -> JSONL path
  std::string active_dataset;
  std::string prompts_dir;
  std::string templates_dir;
  std::string suggestions_path;
  std::optional<std::string> snapshot_dir;

  Strategy parsing_strategy = Strategy::MP;
  bool small_model = false;
  int max_new_tokens = 10;
  bool verify_cfe = true;

  std::string host = "127.0.0.1";
  int port = 8080;
  int turn_timeout_s = 120;
  std::uint64_t seed = 0;

  Metadata metadata;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

// Key-value file with [sections] (docs/config.md). Relative paths resolve against `base_dir`.
// XAICHAT_GENERATOR_URL, XAICHAT_EMBEDDER_URL and XAICHAT_ATTRIBUTOR_URL switch that backend
// to http at the given URL. Throws Error(ConfigError) with the offending line or key.
AppConfig parse_config(std::string_view text, const std::string& base_dir, const EnvLookup& env = process_env);
AppConfig load_config(const std::string& path, const EnvLookup& env = process_env);

// Defaults pointing at the data/ and fixtures/ directories under `root`.
AppConfig default_config(const std::string& root);

// Throws Error(ConfigError) when a referenced path is missing or the active dataset is unknown.
void check_config(const AppConfig& config);

// Everything a server or CLI run needs, built from a config.
struct Runtime {
  AppConfig config;
  std::shared_ptr<GenerationBackend> generator;
  std::shared_ptr<EmbeddingBackend> embedder;      // may be null
  std::shared_ptr<AttributionBackend> attributor;  // may be null
  std::shared_ptr<SimilarityService> similarity;
  std::shared_ptr<DialogueServices> services;
};

Runtime build_runtime(const AppConfig& config);

}  // namespace xaichat
