#include "xaichat/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "xaichat/errors.hpp"
#include "xaichat/text.hpp"

namespace xaichat {

namespace fs = std::filesystem;

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& why) {
  throw Error(ErrorCode::ConfigError, line == 0 ? why : "config line " + std::to_string(line) + ": " + why);
}

struct Value {
  enum class Kind { String, Integer, Boolean } kind;
  std::string text;
  std::int64_t integer = 0;
  bool boolean = false;
  std::size_t line = 0;
};

std::string unquote(const std::string& raw, std::size_t line) {
  std::string out;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    char c = raw[i];
    if (c == '\\') {
      if (i + 2 >= raw.size()) fail(line, "dangling escape");
      const char e = raw[++i];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(line, std::string("unknown escape \\") + e);
      }
    } else {
      out += c;
    }
  }
  return out;
}

Value parse_value(const std::string& raw, std::size_t line) {
  Value v{Value::Kind::String, {}, 0, false, line};
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    v.text = unquote(raw, line);
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = Value::Kind::Boolean;
    v.boolean = raw == "true";
    return v;
  }
  try {
    std::size_t used = 0;
    v.integer = std::stoll(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    v.kind = Value::Kind::Integer;
    return v;
  } catch (const std::exception&) {
    fail(line, "value must be a quoted string, an integer or true/false: " + raw);
  }
}

// Drops a '#' comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && quoted) {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

std::map<std::string, Value> parse_pairs(std::string_view text) {
  std::map<std::string, Value> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = text::trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail(line_no, "bad section header");
      section = text::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    const std::string key = text::trim(line.substr(0, eq));
    if (key.empty()) fail(line_no, "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) fail(line_no, "duplicate key " + full);
    out.emplace(full, parse_value(text::trim(line.substr(eq + 1)), line_no));
  }
  return out;
}

class Reader {
 public:
  Reader(std::map<std::string, Value> pairs, std::string base) : pairs_(std::move(pairs)), base_(std::move(base)) {}

  std::optional<std::string> str(const std::string& key) {
    auto v = take(key);
    if (!v) return std::nullopt;
    if (v->kind != Value::Kind::String) fail(v->line, key + " must be a quoted string");
    return v->text;
  }
  std::optional<std::string> path(const std::string& key) {
    auto s = str(key);
    if (!s || s->empty()) return s;
    return resolve(*s);
  }
  std::optional<std::int64_t> integer(const std::string& key) {
    auto v = take(key);
    if (!v) return std::nullopt;
    if (v->kind != Value::Kind::Integer) fail(v->line, key + " must be an integer");
    return v->integer;
  }
  std::optional<bool> boolean(const std::string& key) {
    auto v = take(key);
    if (!v) return std::nullopt;
    if (v->kind != Value::Kind::Boolean) fail(v->line, key + " must be true or false");
    return v->boolean;
  }
  // Remaining keys under "section."; used for name -> path tables.
  std::map<std::string, Value> section(const std::string& name) {
    std::map<std::string, Value> out;
    const std::string prefix = name + ".";
    for (auto it = pairs_.begin(); it != pairs_.end();) {
      if (it->first.rfind(prefix, 0) == 0) {
        out.emplace(it->first.substr(prefix.size()), it->second);
        it = pairs_.erase(it);
      } else {
        ++it;
      }
    }
    return out;
  }
  std::string resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() || base_.empty() ? p : (fs::path(base_) / path).lexically_normal().string();
  }
  void finish() const {
    if (!pairs_.empty()) {
      const auto& [key, v] = *pairs_.begin();
      fail(v.line, "unknown key " + key);
    }
  }

 private:
  std::optional<Value> take(const std::string& key) {
    auto it = pairs_.find(key);
    if (it == pairs_.end()) return std::nullopt;
    Value v = it->second;
    pairs_.erase(it);
    return v;
  }

  std::map<std::string, Value> pairs_;
  std::string base_;
};

void read_backend(Reader& r, const std::string& section, BackendSettings& b, bool generator) {
  if (auto v = r.str(section + ".kind")) b.kind = *v;
  if (auto v = r.str(section + ".url")) b.url = *v;
  if (auto v = r.integer(section + ".timeout_ms")) b.timeout_ms = static_cast<int>(*v);
  if (auto v = r.integer(section + ".retries")) b.retries = static_cast<int>(*v);
  if (generator) {
    if (auto v = r.boolean(section + ".supports_grammar")) b.supports_grammar = *v;
    if (auto v = r.path(section + ".script")) b.script = *v;
  }
  const bool allowed = b.kind == "mock" || b.kind == "http" || (!generator && b.kind == "none");
  if (!allowed) fail(0, section + ".kind must be " + (generator ? "mock or http" : "mock, http or none"));
  if (b.timeout_ms < 1) fail(0, section + ".timeout_ms must be positive");
  if (b.retries < 0) fail(0, section + ".retries must be >= 0");
}

void apply_env(BackendSettings& b, const EnvLookup& env, const std::string& name) {
  if (auto url = env(name)) {
    b.kind = "http";
    b.url = *url;
  }
}

}  // namespace

AppConfig default_config(const std::string& root) {
  AppConfig c;
  const fs::path r(root);
  c.datasets["covid_fact"] = (r / "data/datasets/covid_fact.jsonl").string();
  c.datasets["ecqa"] = (r / "data/datasets/ecqa.jsonl").string();
  c.active_dataset = "covid_fact";
  c.prompts_dir = (r / "data/prompts").string();
  c.templates_dir = (r / "data/templates").string();
  c.suggestions_path = (r / "data/suggestions.json").string();
  c.generator.script = (r / "fixtures/mock_script.json").string();
  return c;
}

AppConfig parse_config(std::string_view text, const std::string& base_dir, const EnvLookup& env) {
  Reader r(parse_pairs(text), base_dir);
  AppConfig c;
  read_backend(r, "generator", c.generator, true);
  read_backend(r, "embedder", c.embedder, false);
  read_backend(r, "attributor", c.attributor, false);

  for (const auto& [name, v] : r.section("datasets")) {
    if (v.kind != Value::Kind::String) fail(v.line, "datasets." + name + " must be a path string");
    c.datasets[name] = r.resolve(v.text);
  }
  if (auto v = r.str("data.active_dataset")) c.active_dataset = *v;
  if (c.active_dataset.empty() && c.datasets.size() == 1) c.active_dataset = c.datasets.begin()->first;
  if (auto v = r.path("paths.prompts")) c.prompts_dir = *v;
  if (auto v = r.path("paths.templates")) c.templates_dir = *v;
  if (auto v = r.path("paths.suggestions")) c.suggestions_path = *v;
  if (auto v = r.path("paths.snapshots"); v && !v->empty()) c.snapshot_dir = *v;

  if (auto v = r.str("parsing.strategy")) {
    try {
      c.parsing_strategy = strategy_from_string(*v);
    } catch (const Error& e) {
      fail(0, std::string("parsing.strategy: ") + e.what());
    }
  }
  if (auto v = r.boolean("parsing.small_model")) c.small_model = *v;
  if (auto v = r.integer("parsing.max_new_tokens")) c.max_new_tokens = static_cast<int>(*v);
  if (c.max_new_tokens < 1) fail(0, "parsing.max_new_tokens must be >= 1");
  if (auto v = r.boolean("executor.verify_cfe")) c.verify_cfe = *v;

  if (auto v = r.str("server.host")) c.host = *v;
  if (auto v = r.integer("server.port")) c.port = static_cast<int>(*v);
  if (c.port < 0 || c.port > 65535) fail(0, "server.port out of range");
  if (auto v = r.integer("server.turn_timeout_s")) c.turn_timeout_s = static_cast<int>(*v);
  if (auto v = r.integer("session.seed")) c.seed = static_cast<std::uint64_t>(*v);

  if (auto v = r.str("metadata.model_card")) c.metadata.model_card = *v;
  if (auto v = r.str("metadata.self_description")) c.metadata.self_description = *v;
  if (auto v = r.str("metadata.function_description")) c.metadata.function_description = *v;
  if (auto v = r.str("metadata.websearch_notice")) c.metadata.websearch_notice = *v;
  r.finish();

  apply_env(c.generator, env, "XAICHAT_GENERATOR_URL");
  apply_env(c.embedder, env, "XAICHAT_EMBEDDER_URL");
  apply_env(c.attributor, env, "XAICHAT_ATTRIBUTOR_URL");
  for (const auto* b : {&c.generator, &c.embedder, &c.attributor}) {
    if (b->kind == "http" && b->url.empty()) fail(0, "an http backend needs a url");
  }
  return c;
}

AppConfig load_config(const std::string& path, const EnvLookup& env) {
  std::string text;
  try {
    text = text::read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, "cannot read config " + path);
  }
  return parse_config(text, fs::path(path).parent_path().string(), env);
}

void check_config(const AppConfig& c) {
  auto need = [](const std::string& what, const std::string& p) {
    if (p.empty() || !fs::exists(p)) fail(0, what + " not found: " + (p.empty() ? "(unset)" : p));
  };
  if (c.datasets.empty()) fail(0, "no datasets configured");
  if (c.datasets.find(c.active_dataset) == c.datasets.end()) {
    fail(0, "active dataset '" + c.active_dataset + "' is not in [datasets]");
  }
  for (const auto& [name, p] : c.datasets) need("dataset " + name, p);
  need("prompt directory", c.prompts_dir);
  need("template directory", c.templates_dir);
  need("suggestion phrases", c.suggestions_path);
  if (c.generator.kind == "mock" && !c.generator.script.empty()) need("mock script", c.generator.script);
}

Runtime build_runtime(const AppConfig& config) {
  check_config(config);
  Runtime rt;
  rt.config = config;
  auto endpoint = [](const BackendSettings& b) {
    return HttpEndpoint{b.url, std::chrono::milliseconds(b.timeout_ms), b.retries};
  };

  if (config.generator.kind == "http") {
    rt.generator = std::make_shared<HttpGenerator>(endpoint(config.generator), config.generator.supports_grammar);
  } else if (!config.generator.script.empty()) {
    rt.generator = MockGenerator::from_script(config.generator.script);
  } else {
    rt.generator = std::make_shared<MockGenerator>(config.generator.supports_grammar);
  }
  if (config.embedder.kind == "http") {
    rt.embedder = std::make_shared<HttpEmbedder>(endpoint(config.embedder));
  } else if (config.embedder.kind == "mock") {
    rt.embedder = std::make_shared<MockEmbedder>();
  }
  if (config.attributor.kind == "http") {
    rt.attributor = std::make_shared<HttpAttributor>(endpoint(config.attributor));
  } else if (config.attributor.kind == "mock") {
    rt.attributor = std::make_shared<MockAttributor>();
  }
  rt.similarity = std::make_shared<SimilarityService>(rt.embedder);

  auto s = std::make_shared<DialogueServices>();
  s->similarity = rt.similarity;
  s->parser = std::make_shared<ParsingEngine>(rt.generator, rt.similarity);
  s->executor = std::make_shared<Executor>(ExecutorBackends{rt.generator, rt.attributor, rt.similarity},
                                           ResponseTemplates::load(config.templates_dir), config.metadata);
  s->prompts = std::make_shared<const PromptStore>(PromptStore::load(config.prompts_dir));
  s->active_dataset = config.active_dataset;
  for (const auto& [name, p] : config.datasets) {
    s->datasets[name] = std::make_shared<const Dataset>(load_dataset(p));
  }
  s->phrases = load_suggestion_phrases(config.suggestions_path);
  s->config.max_new_tokens = config.max_new_tokens;
  s->config.small_model = config.small_model;
  s->config.verify_cfe = config.verify_cfe;
  s->config.default_strategy = config.parsing_strategy;
  rt.services = s;
  return rt;
}

}  // namespace xaichat
