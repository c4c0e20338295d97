#include <gtest/gtest.h>

#include <filesystem>

#include "xaichat/config.hpp"
#include "xaichat/errors.hpp"

using namespace xaichat;

namespace {

EnvLookup no_env() {
  return [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, ParsesEverySection) {
  const auto c = parse_config(R"(
# comment
[generator]
kind = "http"
url = "http://gen:9000"   # trailing comment
timeout_ms = 500
retries = 2
supports_grammar = false

[embedder]
kind = "none"

[attributor]
kind = "mock"

[datasets]
covid_fact = "data/covid.jsonl"
other = "/abs/other.jsonl"

[data]
active_dataset = "other"

[paths]
prompts = "p"
templates = "t"
suggestions = "s.json"
snapshots = "snaps"

[parsing]
strategy = "nn"
small_model = true
max_new_tokens = 20

[executor]
verify_cfe = false

[server]
host = "0.0.0.0"
port = 9090
turn_timeout_s = 30

[session]
seed = 7

[metadata]
model_card = "card with # hash"
)",
                              "/base", no_env());
  EXPECT_EQ(c.generator.kind, "http");
  EXPECT_EQ(c.generator.url, "http://gen:9000");
  EXPECT_EQ(c.generator.timeout_ms, 500);
  EXPECT_EQ(c.generator.retries, 2);
  EXPECT_FALSE(c.generator.supports_grammar);
  EXPECT_EQ(c.embedder.kind, "none");
  EXPECT_EQ(c.attributor.kind, "mock");
  EXPECT_EQ(c.datasets.at("covid_fact"), "/base/data/covid.jsonl");
  EXPECT_EQ(c.datasets.at("other"), "/abs/other.jsonl");
  EXPECT_EQ(c.active_dataset, "other");
  EXPECT_EQ(c.prompts_dir, "/base/p");
  EXPECT_EQ(c.templates_dir, "/base/t");
  EXPECT_EQ(c.suggestions_path, "/base/s.json");
  ASSERT_TRUE(c.snapshot_dir);
  EXPECT_EQ(*c.snapshot_dir, "/base/snaps");
  EXPECT_EQ(c.parsing_strategy, Strategy::NearestNeighbor);
  EXPECT_TRUE(c.small_model);
  EXPECT_EQ(c.max_new_tokens, 20);
  EXPECT_FALSE(c.verify_cfe);
  EXPECT_EQ(c.host, "0.0.0.0");
  EXPECT_EQ(c.port, 9090);
  EXPECT_EQ(c.turn_timeout_s, 30);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.metadata.model_card, "card with # hash");
}

TEST(Config, DefaultsWhenEmpty) {
  const auto c = parse_config("", "", no_env());
  EXPECT_EQ(c.generator.kind, "mock");
  EXPECT_EQ(c.parsing_strategy, Strategy::MP);
  EXPECT_EQ(c.max_new_tokens, 10);
  EXPECT_FALSE(c.snapshot_dir);
  EXPECT_EQ(c.port, 8080);
}

TEST(Config, EmptySnapshotPathMeansMemoryOnly) {
  const auto c = parse_config("[paths]\nsnapshots = \"\"\n", "/base", no_env());
  EXPECT_FALSE(c.snapshot_dir);
}

TEST(Config, EnvironmentSwitchesBackendsToHttp) {
  EnvLookup env = [](const std::string& name) -> std::optional<std::string> {
    if (name == "XAICHAT_GENERATOR_URL") return "http://g:1";
    if (name == "XAICHAT_ATTRIBUTOR_URL") return "http://a:2";
    return std::nullopt;
  };
  const auto c = parse_config("[embedder]\nkind = \"none\"\n", "", env);
  EXPECT_EQ(c.generator.kind, "http");
  EXPECT_EQ(c.generator.url, "http://g:1");
  EXPECT_EQ(c.embedder.kind, "none");
  EXPECT_EQ(c.attributor.kind, "http");
  EXPECT_EQ(c.attributor.url, "http://a:2");
}

TEST(Config, Errors) {
  auto parse = [](const std::string& text) { return [text] { (void)parse_config(text, "", no_env()); }; };
  EXPECT_EQ(code_of(parse("[generator]\nkind = \"http\"\n")), ErrorCode::ConfigError);
  EXPECT_EQ(code_of(parse("[generator]\nkind = \"none\"\n")), ErrorCode::ConfigError);
  EXPECT_EQ(code_of(parse("[parsing]\nstrategy = \"beam\"\n")), ErrorCode::ConfigError);
  EXPECT_EQ(code_of(parse("[parsing]\nmax_new_tokens = 0\n")), ErrorCode::ConfigError);
  EXPECT_EQ(code_of(parse("[server]\nport = 70000\n")), ErrorCode::ConfigError);
  EXPECT_EQ(code_of(parse("[server]\nport = \"80\"\n")), ErrorCode::ConfigError);
  EXPECT_EQ(code_of(parse("[parsing\n")), ErrorCode::ConfigError);
  EXPECT_EQ(code_of(parse("key without value\n")), ErrorCode::ConfigError);
  EXPECT_EQ(code_of(parse("[a]\nx = 1\nx = 2\n")), ErrorCode::ConfigError);
  EXPECT_EQ(code_of(parse("[paths]\nprompts = bare\n")), ErrorCode::ConfigError);

  const auto unknown = message_of(parse("\n[server]\nhots = \"x\"\n"));
  EXPECT_NE(unknown.find("config line 3"), std::string::npos) << unknown;
  EXPECT_NE(unknown.find("server.hots"), std::string::npos) << unknown;
}

TEST(Config, ShippedConfigLoadsAndChecks) {
  const auto path = std::string(XAICHAT_SOURCE_DIR) + "/config/xaichat.conf";
  const auto c = load_config(path, no_env());
  EXPECT_NO_THROW(check_config(c));
  EXPECT_EQ(c.active_dataset, "covid_fact");
  EXPECT_EQ(c.datasets.size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(c.generator.script));

  const auto rt = build_runtime(c);
  EXPECT_EQ(rt.generator->backend_id(), "mock-scripted");
  EXPECT_EQ(rt.services->datasets.at("covid_fact")->size(), 60);
  EXPECT_EQ(rt.services->datasets.at("ecqa")->size(), 60);
}

TEST(Config, CheckRejectsMissingPaths) {
  auto c = default_config(XAICHAT_SOURCE_DIR);
  EXPECT_NO_THROW(check_config(c));
  c.active_dataset = "nope";
  EXPECT_EQ(code_of([&] { check_config(c); }), ErrorCode::ConfigError);
  c = default_config(XAICHAT_SOURCE_DIR);
  c.prompts_dir = "/does/not/exist";
  EXPECT_EQ(code_of([&] { check_config(c); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { (void)load_config("/does/not/exist.conf"); }), ErrorCode::ConfigError);
}
