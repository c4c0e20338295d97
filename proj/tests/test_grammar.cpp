#include <gtest/gtest.h>

#include <set>

#include "xaichat/errors.hpp"
#include "xaichat/grammar.hpp"
#include "xaichat/query.hpp"
#include "xaichat/validate.hpp"

using namespace xaichat;

namespace {

GrammarContext context_of(std::int64_t size, bool focus = false) {
  GrammarContext ctx;
  ctx.dataset_size = size;
  ctx.focus_available = focus;
  return ctx;
}

ErrorCode grammar_error(const std::string& text) {
  try {
    Grammar g(FormalGrammar{text, "root"});
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "accepted: " << text;
  return ErrorCode::NotFound;
}

}  // namespace

TEST(CompileGrammar, SamplesRoundTripThroughParser) {
  const Grammar g(compile_grammar(default_catalog(), context_of(60)));
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const std::string s = g.sample(rng);
    ASSERT_EQ(render_query(parse_query(s)), s) << s;
  }
}

TEST(CompileGrammar, SamplesValidateInContext) {
  for (bool focus : {false, true}) {
    const auto gctx = context_of(12, focus);
    const Grammar g(compile_grammar(default_catalog(), gctx));
    ValidationContext vctx;
    vctx.dataset_size = 12;
    vctx.focus_available = focus;
    std::mt19937_64 rng(11);
    for (int i = 0; i < 500; ++i) {
      const std::string s = g.sample(rng);
      const auto report = validate(parse_query(s), default_catalog(), vctx);
      ASSERT_TRUE(report.ok()) << s << ": " << report.summary();
    }
  }
}

TEST(CompileGrammar, EveryOperationIsReachable) {
  const Grammar g(compile_grammar(default_catalog(), context_of(30, true)));
  std::mt19937_64 rng(3);
  std::set<std::string> seen;
  for (int i = 0; i < 4000; ++i) {
    for (const auto& op : operation_names(parse_query(g.sample(rng)))) seen.insert(op);
  }
  EXPECT_EQ(seen.size(), default_catalog().main_operation_names().size());
}

TEST(CompileGrammar, MetricRuleIsAnAlternation) {
  const auto src = compile_grammar(default_catalog(), context_of(10)).text;
  EXPECT_NE(src.find("metric ::= \"f1\" | \"precision\" | \"recall\" | \"accuracy\""), std::string::npos)
      << src;
}

TEST(CompileGrammar, SingleInstanceContext) {
  const Grammar g(compile_grammar(default_catalog(), context_of(1)));
  EXPECT_TRUE(g.derives("filter id 0 and predict"));
  EXPECT_FALSE(g.derives("filter id 1 and predict"));
  EXPECT_FALSE(g.derives("predict"));
  EXPECT_TRUE(g.derives("randompredict 1"));
  EXPECT_FALSE(g.derives("randompredict 2"));
}

TEST(CompileGrammar, CustomInputsExtendIdRange) {
  auto ctx = context_of(0);
  ctx.custom_input_ids = {5};
  const Grammar g(compile_grammar(default_catalog(), ctx));
  EXPECT_TRUE(g.derives("filter id 5 and cfe"));
  EXPECT_FALSE(g.derives("filter id 0 and cfe"));
}

TEST(CompileGrammar, EmptyContextRejected) {
  try {
    (void)compile_grammar(default_catalog(), context_of(0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyContext);
  }
}

TEST(CompileGrammar, RestrictedMethodList) {
  auto ctx = context_of(10);
  ctx.methods = {"lime"};
  const Grammar g(compile_grammar(default_catalog(), ctx));
  EXPECT_TRUE(g.derives("filter id 2 and nlpattribute lime"));
  EXPECT_FALSE(g.derives("filter id 2 and nlpattribute integrated_gradient"));
  ctx.methods = {"shap"};
  EXPECT_THROW((void)compile_grammar(default_catalog(), ctx), Error);
}

TEST(CompileGrammar, RejectsNonCanonicalStrings) {
  const Grammar g(compile_grammar(default_catalog(), context_of(50, true)));
  EXPECT_TRUE(g.derives("filter id 26 and rationalize"));
  EXPECT_TRUE(g.derives("filter id 42 and nlpattribute integrated_gradient"));
  EXPECT_TRUE(g.derives("filter id 1 or filter id 2 and mistakes show"));
  EXPECT_TRUE(g.derives("score f1"));
  EXPECT_FALSE(g.derives("filter id 26  and rationalize"));
  EXPECT_FALSE(g.derives("Filter id 26 and rationalize"));
  EXPECT_FALSE(g.derives("filter id 26 and nlpattribute attention"));
  EXPECT_FALSE(g.derives("filter id 026 and predict"));
  EXPECT_FALSE(g.derives("filter id 1"));
  EXPECT_FALSE(g.derives("predict or augment"));
  EXPECT_FALSE(g.derives("filter id 1 and filter id 2 or filter id 3 and predict"));
}

TEST(GrammarDialect, AcceptsBoundedRepetitionAndOptional) {
  const Grammar g(FormalGrammar{"root ::= \"a\" (\",\" \"a\"){0,2} tail?\ntail ::= \"!\" INT[3..]\n"});
  EXPECT_EQ(g.rule_count(), 2u);
  EXPECT_TRUE(g.derives("a"));
  EXPECT_TRUE(g.derives("a,a,a!3"));
  EXPECT_TRUE(g.derives("a!1000"));
  EXPECT_FALSE(g.derives("a,a,a,a"));
  EXPECT_FALSE(g.derives("a!2"));
}

TEST(GrammarDialect, RejectsMalformedGrammars) {
  EXPECT_EQ(grammar_error("root ::= missing"), ErrorCode::InvalidGrammar);
  EXPECT_EQ(grammar_error("root ::= \"a\" root | \"b\""), ErrorCode::InvalidGrammar);
  EXPECT_EQ(grammar_error("root ::= a\na ::= root"), ErrorCode::InvalidGrammar);
  EXPECT_EQ(grammar_error("root ::= \"a"), ErrorCode::InvalidGrammar);
  EXPECT_EQ(grammar_error("root ::= \"a\"*"), ErrorCode::InvalidGrammar);
  EXPECT_EQ(grammar_error("root ::= INT[5..2]"), ErrorCode::InvalidGrammar);
  EXPECT_EQ(grammar_error("root ::= \"a\"{3,1}"), ErrorCode::InvalidGrammar);
  EXPECT_EQ(grammar_error("WORD ::= \"a\"\nroot ::= WORD"), ErrorCode::InvalidGrammar);
  EXPECT_EQ(grammar_error("other ::= \"a\""), ErrorCode::InvalidGrammar);
  EXPECT_EQ(grammar_error("root ::= \"a\"\nroot ::= \"b\""), ErrorCode::InvalidGrammar);
}

TEST(GrammarDialect, WordSamplesAvoidConnectives) {
  const Grammar g(FormalGrammar{"root ::= WORD"});
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const auto w = g.sample(rng);
    ASSERT_GE(w.size(), 3u);
    ASSERT_LE(w.size(), 8u);
    ASSERT_NE(w, "and");
  }
}
