#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <regex>

#include "xaichat/grammar.hpp"
#include "xaichat/parsing.hpp"
#include "xaichat/text.hpp"
#include "xaichat/validate.hpp"

using namespace xaichat;

namespace {

const PromptStore& store() {
  static const PromptStore s = PromptStore::load(std::string(XAICHAT_DATA_DIR) + "/prompts");
  return s;
}

ParseContext context(std::int64_t size = 60) {
  ParseContext ctx;
  ctx.dataset_size = size;
  return ctx;
}

MockRule stage_rule(std::string prompt_marker, std::string input_regex, std::string completion) {
  MockRule r;
  r.when_prompt_contains = std::move(prompt_marker);
  r.when_input_matches = std::move(input_regex);
  r.completion = std::move(completion);
  return r;
}

constexpr const char* kStage1 = "Pick the operation";
constexpr const char* kStage2Nlp = "operation \"nlpattribute\"";

// Every ById in `ast` is grounded by the utterance text, a custom input or the focus.
bool grounded_by_inspection(const QueryAst& ast, const std::string& utterance, const ParseContext& ctx) {
  for (auto id : filter_ids(ast)) {
    const std::regex literal("(^|[^0-9])" + std::to_string(id) + "([^0-9]|$)");
    const bool in_text = std::regex_search(utterance, literal);
    const bool custom = std::find(ctx.custom_input_ids.begin(), ctx.custom_input_ids.end(), id) !=
                        ctx.custom_input_ids.end();
    const bool focus = ctx.focus_id && *ctx.focus_id == id;
    if (!in_text && !custom && !focus) return false;
  }
  return true;
}

}  // namespace

TEST(PromptStore, LoadsShippedPrompts) {
  const auto& s = store();
  EXPECT_GE(s.gd_pool().size(), PromptStore::kMinGdPool);
  EXPECT_EQ(s.stage1_demos().size(), 3u);
  for (const auto& name : default_catalog().operation_names()) {
    const auto& demos = s.stage2_demos(name);
    EXPECT_GE(demos.size(), 2u) << name;
    EXPECT_LE(demos.size(), 7u) << name;
  }
  for (const auto& d : s.gd_pool()) EXPECT_EQ(render_query(parse_query(d.parse)), d.parse);
  EXPECT_THROW((void)s.stage2_demos("teleport"), Error);
}

TEST(PromptStore, EveryPromptEndsWithTheUtteranceSlot) {
  for (const char* name : {"gd", "mp_stage1", "mp_stage2"}) {
    const std::string tail = "Input: {utterance}\nOutput:";
    const auto& t = store().get_template(name);
    EXPECT_TRUE(t.size() >= tail.size() && t.substr(t.size() - tail.size()) == tail) << name;
  }
}

TEST(PromptStore, RejectsBrokenDirectories) {
  EXPECT_THROW((void)PromptStore::load("/nonexistent/prompts"), SchemaError);
}

TEST(PromptStore, Overrides) {
  const auto custom = store().with_overrides({{"gd", "Q: {utterance}\n{demonstrations}Input: {utterance}\nOutput:"}});
  EXPECT_EQ(custom.get_template("gd").substr(0, 2), "Q:");
  EXPECT_NE(store().get_template("gd").substr(0, 2), "Q:");
  try {
    (void)store().with_overrides({{"gd", "no slots here"}});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
  EXPECT_THROW((void)store().with_overrides({{"nonexistent", "{utterance}"}}), Error);
}

TEST(ExtractId, Patterns) {
  EXPECT_EQ(extract_instance_id("explain ID 42 please"), 42);
  EXPECT_EQ(extract_instance_id("what about instance #7"), 7);
  EXPECT_EQ(extract_instance_id("sample: 13"), 13);
  EXPECT_EQ(extract_instance_id("#5 looks odd"), 5);
  EXPECT_FALSE(extract_instance_id("predict 10 random instances").has_value());
  EXPECT_FALSE(extract_instance_id("video 3").has_value());
}

TEST(ParseGd, RationaleRequest) {
  auto gen = std::make_shared<MockGenerator>();
  MockRule r;
  r.when_input_equals = "please explain the reasoning behind id 26";
  r.completion = "filter id 26 and rationalize";
  gen->add_rule(r);
  ParsingEngine engine(gen, nullptr);
  const auto result = engine.parse_gd("please explain the reasoning behind id 26", store(), context());
  EXPECT_EQ(result.canonical(), "filter id 26 and rationalize");
  EXPECT_TRUE(result.repairs.empty());
  EXPECT_EQ(result.strategy, Strategy::GD);
}

TEST(ParseGd, MemorizedDemonstration) {
  auto gen = std::make_shared<MockGenerator>(false);
  gen->set_echo_demonstrations(true);
  ParsingEngine engine(gen, std::make_shared<SimilarityService>(std::make_shared<MockEmbedder>()));
  // Some demonstrations say "this instance", so a focus is in scope.
  auto ctx = context();
  ctx.focus_id = 0;
  for (const auto& d : store().gd_pool()) {
    const auto result = engine.parse_gd(d.utterance, store(), ctx);
    EXPECT_EQ(result.canonical(), d.parse) << d.utterance;
    EXPECT_TRUE(result.repairs.empty()) << d.utterance;
  }
}

TEST(ParseGd, PromptSelectsMostSimilarFirst) {
  auto gen = std::make_shared<MockGenerator>();
  ParsingEngine engine(gen, nullptr);
  const std::string u = "how many instances are there";
  const auto demos = engine.select_gd_demos(u, store(), context());
  ASSERT_EQ(demos.size(), ParsingEngine::kGdShots);
  EXPECT_EQ(demos.front().utterance, u);
  // Oracle: lexical similarity of each chosen demo is non-increasing.
  for (std::size_t i = 1; i < demos.size(); ++i) {
    EXPECT_GE(lexical_similarity(u, demos[i - 1].utterance), lexical_similarity(u, demos[i].utterance));
  }
  const auto prompt = engine.build_gd_prompt(u, store(), context());
  EXPECT_NE(prompt.find("Input: " + u + "\nOutput: countdata\n\n"), std::string::npos);
  EXPECT_EQ(prompt.substr(prompt.size() - (u.size() + 15)), "Input: " + u + "\nOutput:");
}

TEST(ParseGd, BudgetDropsLeastSimilar) {
  auto gen = std::make_shared<MockGenerator>();
  ParsingEngine engine(gen, nullptr);
  auto ctx = context();
  const std::string u = "how many instances are there";
  const auto full = engine.select_gd_demos(u, store(), ctx);
  ctx.prompt_budget = 150;
  const auto cut = engine.select_gd_demos(u, store(), ctx);
  ASSERT_LT(cut.size(), full.size());
  ASSERT_FALSE(cut.empty());
  for (std::size_t i = 0; i < cut.size(); ++i) EXPECT_EQ(cut[i].utterance, full[i].utterance);
  EXPECT_LE(text::split_whitespace(engine.build_gd_prompt(u, store(), ctx)).size(), 150u);
}

TEST(ParseGd, GrammarSamplingMockNeverUnparseable) {
  // No rules: every answer is the fallback grammar sample.
  auto gen = std::make_shared<MockGenerator>();
  ParsingEngine engine(gen, nullptr);
  std::mt19937_64 rng(11);
  const std::vector<std::string> words{"show", "explain", "why", "instance", "model", "count", "what", "data"};
  int failures = 0;
  for (int i = 0; i < 200; ++i) {
    std::string u;
    for (int w = 0; w < 5; ++w) u += words[rng() % words.size()] + " ";
    u += std::to_string(rng() % 60);
    auto ctx = context();
    ctx.focus_id = static_cast<std::int64_t>(rng() % 60);
    ctx.max_new_tokens = 40;
    try {
      const auto result = engine.parse_gd(u, store(), ctx);
      ValidationContext v{ctx.dataset_size, ctx.custom_input_ids, true};
      EXPECT_TRUE(validate(result.ast, default_catalog(), v).ok()) << result.canonical();
      EXPECT_TRUE(grounded_by_inspection(result.ast, u, ctx)) << result.canonical();
    } catch (const ParseFailure& e) {
      ++failures;
      ADD_FAILURE() << u << " -> " << e.raw().front();
    }
  }
  EXPECT_EQ(failures, 0);
}

TEST(ParseGd, UnsupportedGrammarRunsUnconstrained) {
  auto gen = std::make_shared<MockGenerator>(false);
  MockRule r;
  r.completion = "countdata";
  gen->add_rule(r);
  ParsingEngine engine(gen, nullptr);
  EXPECT_EQ(engine.parse_gd("how many?", store(), context()).canonical(), "countdata");
  EXPECT_EQ(gen->call_count(), 1u);
}

TEST(ParseGd, GarbageIsUnparseable) {
  auto gen = std::make_shared<MockGenerator>(false);
  ParsingEngine engine(gen, nullptr);
  try {
    (void)engine.parse_gd("blorp", store(), context());
    ADD_FAILURE();
  } catch (const ParseFailure& e) {
    EXPECT_EQ(e.code(), ErrorCode::Unparseable);
    EXPECT_EQ(e.raw().front(), MockGenerator::kSentinel);
  }
}

TEST(ParseGd, MissingRequiredAttributeIsFilled) {
  auto gen = std::make_shared<MockGenerator>(false);
  MockRule r;
  r.completion = "score";
  gen->add_rule(r);
  ParsingEngine engine(gen, nullptr);
  const auto result = engine.parse_gd("how good is it", store(), context());
  EXPECT_EQ(result.canonical(), "score accuracy");
  EXPECT_EQ(result.repairs, std::vector<Repair>{Repair::DefaultsFilled});
}

TEST(ParseGd, EmptyContextFallsBackToNoGrammar) {
  auto gen = std::make_shared<MockGenerator>();
  MockRule r;
  r.completion = "function";
  gen->add_rule(r);
  ParsingEngine engine(gen, nullptr);
  EXPECT_EQ(engine.parse_gd("what can you do", store(), context(0)).canonical(), "function");
}

TEST(ParseGd, BackendErrorsPropagate) {
  auto gen = std::make_shared<MockGenerator>();
  gen->set_handler([](const GenerationRequest&) -> std::optional<std::string> {
    throw Error(ErrorCode::Timeout, "slow");
  });
  ParsingEngine engine(gen, nullptr);
  try {
    (void)engine.parse_gd("hello", store(), context());
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Timeout);
  }
}

TEST(ParseMp, WorkedExample) {
  auto gen = std::make_shared<MockGenerator>(false);
  const std::string u = "What are the feature attributions for ID 42 based on the integrated gradients?";
  gen->add_rule(stage_rule(kStage1, ".*feature attributions.*", "nlpattribute"));
  gen->add_rule(stage_rule(kStage2Nlp, ".*integrated gradients.*", "filter id 42 and nlpattribute integrated_gradient"));
  ParsingEngine engine(gen, nullptr);
  const auto result = engine.parse_mp(u, store(), context());
  EXPECT_EQ(result.canonical(), "filter id 42 and nlpattribute integrated_gradient");
  EXPECT_TRUE(result.repairs.empty());
  EXPECT_EQ(result.main_op, "nlpattribute");
  ASSERT_EQ(result.raw.size(), 2u);
  EXPECT_EQ(gen->call_count(), 2u);
}

TEST(ParseMp, Stage1PromptListsEveryOperation) {
  ParsingEngine engine(std::make_shared<MockGenerator>(), nullptr);
  const auto prompt = engine.build_stage1_prompt("hi", store());
  for (const auto& name : default_catalog().operation_names()) {
    EXPECT_NE(prompt.find("\n" + name + ": "), std::string::npos) << name;
  }
  const auto stage2 = engine.build_stage2_prompt("hi", "cfe", store());
  EXPECT_NE(stage2.find("Output: filter id 2 and cfe\n"), std::string::npos);
}

TEST(ParseMp, FuzzyMatchAgainstBruteForce) {
  auto gen = std::make_shared<MockGenerator>(false);
  gen->add_rule(stage_rule(kStage1, ".*", "rationalise"));
  gen->add_rule(stage_rule("operation \"rationalize\"", ".*", "filter id 3 and rationalize"));
  // Lexical similarity only, so the oracle can recompute it.
  ParsingEngine engine(gen, std::make_shared<SimilarityService>());
  const auto result = engine.parse_mp("why was id 3 classified this way", store(), context());

  std::string best;
  double best_score = -1;
  for (const auto& name : default_catalog().operation_names()) {
    const double s = lexical_similarity("rationalise", name);
    if (s > best_score) {
      best_score = s;
      best = name;
    }
  }
  EXPECT_EQ(best, "rationalize");
  EXPECT_EQ(result.main_op, best);
  EXPECT_EQ(result.canonical(), "filter id 3 and rationalize");
  EXPECT_EQ(result.repairs, std::vector<Repair>{Repair::FuzzyOpMatch});
  ASSERT_TRUE(result.confidence.has_value());
  EXPECT_DOUBLE_EQ(*result.confidence, best_score);
}

TEST(ParseMp, FuzzyBelowThresholdIsUnparseable) {
  auto gen = std::make_shared<MockGenerator>(false);
  gen->add_rule(stage_rule(kStage1, ".*", "zzzzqqqq"));
  ParsingEngine engine(gen, std::make_shared<SimilarityService>());
  EXPECT_THROW((void)engine.parse_mp("anything", store(), context()), ParseFailure);
}

TEST(ParseMp, HallucinatedIdRemoved) {
  auto gen = std::make_shared<MockGenerator>(false);
  gen->add_rule(stage_rule(kStage1, ".*", "augment"));
  gen->add_rule(stage_rule("operation \"augment\"", ".*", "filter id 999 and augment"));
  ParsingEngine engine(gen, nullptr);
  auto ctx = context();
  ctx.focus_id = 4;
  const auto result = engine.parse_mp("please augment this one", store(), ctx);
  EXPECT_EQ(result.canonical(), "augment");
  EXPECT_EQ(result.repairs, std::vector<Repair>{Repair::IdHallucinationRemoved});
}

TEST(ParseMp, HallucinatedIdWithoutFocusIsUnparseable) {
  auto gen = std::make_shared<MockGenerator>(false);
  gen->add_rule(stage_rule(kStage1, ".*", "augment"));
  gen->add_rule(stage_rule("operation \"augment\"", ".*", "filter id 999 and augment"));
  ParsingEngine engine(gen, nullptr);
  EXPECT_THROW((void)engine.parse_mp("please augment this one", store(), context()), ParseFailure);
}

TEST(ParseMp, StageCoherence) {
  // Stage 2 drifts to another operation; the result keeps the stage-1 operation.
  auto gen = std::make_shared<MockGenerator>(false);
  gen->add_rule(stage_rule(kStage1, ".*", "label"));
  gen->add_rule(stage_rule("operation \"label\"", ".*", "keywords"));
  ParsingEngine engine(gen, nullptr);
  const auto result = engine.parse_mp("labels please", store(), context());
  EXPECT_EQ(result.canonical(), "label");
}

TEST(ParseMp, SmallModelExtractsId) {
  auto gen = std::make_shared<MockGenerator>(false);
  gen->add_rule(stage_rule(kStage1, ".*", "predict"));
  gen->add_rule(stage_rule("operation \"predict\"", ".*", "predict"));
  ParsingEngine engine(gen, nullptr);
  auto ctx = context();
  EXPECT_THROW((void)engine.parse_mp("what is the prediction for instance 17", store(), ctx), ParseFailure);
  ctx.small_model = true;
  const auto result = engine.parse_mp("what is the prediction for instance 17", store(), ctx);
  EXPECT_EQ(result.canonical(), "filter id 17 and predict");
  EXPECT_EQ(result.repairs, std::vector<Repair>{Repair::IdExtractedFromUtterance});
  // Out-of-range ids are not inserted.
  EXPECT_THROW((void)engine.parse_mp("what is the prediction for instance 170", store(), ctx), ParseFailure);
}

TEST(ParseMp, Deterministic) {
  auto gen = std::make_shared<MockGenerator>(false);
  gen->set_echo_demonstrations(true);
  gen->add_rule(stage_rule(kStage1, ".*", "similarity"));
  ParsingEngine engine(gen, nullptr);
  const std::string u = "find 3 instances similar to id 9";
  const auto a = engine.parse_mp(u, store(), context());
  const auto b = engine.parse_mp(u, store(), context());
  EXPECT_EQ(a.canonical(), "filter id 9 and similarity 3");
  EXPECT_EQ(a.canonical(), b.canonical());
  EXPECT_EQ(a.raw, b.raw);
  EXPECT_EQ(a.repairs, b.repairs);
}

TEST(HallucinationFilter, AdversarialOutputs) {
  std::mt19937_64 rng(99);
  auto gen = std::make_shared<MockGenerator>(false);
  std::string next;
  gen->set_handler([&](const GenerationRequest&) -> std::optional<std::string> { return next; });
  ParsingEngine engine(gen, nullptr);
  const std::vector<std::string> ops{"predict", "rationalize", "cfe", "augment", "show", "nlpattribute"};
  for (int i = 0; i < 100; ++i) {
    const auto real = static_cast<std::int64_t>(rng() % 50);
    const auto fake = 100 + static_cast<std::int64_t>(rng() % 900);
    const std::string u = "tell me about item " + std::to_string(real);
    next = "filter id " + std::to_string(fake) + " or filter id " + std::to_string(real) + " and " +
           ops[rng() % ops.size()];
    auto ctx = context(1000);
    ctx.focus_id = 7;
    try {
      const auto result = engine.parse_gd(u, store(), ctx);
      EXPECT_TRUE(grounded_by_inspection(result.ast, u, ctx)) << result.canonical();
      EXPECT_TRUE(result.has_repair(Repair::IdHallucinationRemoved));
    } catch (const ParseFailure&) {
    }
  }
}

TEST(ParseNn, ArgmaxOracle) {
  auto gen = std::make_shared<MockGenerator>();
  auto sim = std::make_shared<SimilarityService>(std::make_shared<MockEmbedder>());
  ParsingEngine engine(gen, sim);
  for (const std::string u : {"how many data points", "explain why id 4 was predicted", "hi", "",
                              "counterfactual for 3", "give me a tutorial"}) {
    const auto result = engine.parse_nn(u, store(), context());
    // Oracle: scan the pool with fresh embeddings, first max wins.
    std::size_t best = 0;
    double best_score = -2;
    const auto q = MockEmbedder::embed_one(u);
    for (std::size_t i = 0; i < store().gd_pool().size(); ++i) {
      const double s = cosine(q, MockEmbedder::embed_one(store().gd_pool()[i].utterance));
      if (s > best_score) {
        best_score = s;
        best = i;
      }
    }
    EXPECT_EQ(result.canonical(), store().gd_pool()[best].parse) << u;
    EXPECT_NEAR(*result.confidence, best_score, 1e-12);
  }
  EXPECT_EQ(gen->call_count(), 0u);
}

TEST(ParseNn, ExactDemonstration) {
  ParsingEngine engine(std::make_shared<MockGenerator>(), nullptr);
  for (const auto& d : store().gd_pool()) {
    EXPECT_EQ(engine.parse_nn(d.utterance, store(), context()).canonical(), d.parse);
  }
}

TEST(Strategy, Names) {
  EXPECT_EQ(strategy_from_string("GD"), Strategy::GD);
  EXPECT_EQ(strategy_from_string("mp"), Strategy::MP);
  EXPECT_EQ(strategy_from_string("nn"), Strategy::NearestNeighbor);
  EXPECT_EQ(to_string(Strategy::MP), "mp");
  EXPECT_THROW((void)strategy_from_string("beam"), Error);
}
