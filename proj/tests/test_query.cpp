#include <gtest/gtest.h>

#include "xaichat/errors.hpp"
#include "xaichat/query.hpp"
#include "xaichat/validate.hpp"

using namespace xaichat;

namespace {

ErrorCode code_of(const std::string& text) {
  try {
    (void)parse_query(text);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error for: " << text;
  return ErrorCode::NotFound;
}

}  // namespace

TEST(ParseQuery, FilterAndRationalize) {
  const auto ast = parse_query("filter id 26 and rationalize");
  ASSERT_EQ(ast.filters.size(), 1u);
  EXPECT_EQ(std::get<ById>(ast.filters[0]).id, 26);
  ASSERT_EQ(ast.operations.size(), 1u);
  EXPECT_EQ(ast.operations[0].op, "rationalize");
  EXPECT_TRUE(ast.operations[0].attrs.empty());
}

TEST(ParseQuery, NlpattributeFillsDefaultTopk) {
  const auto ast = parse_query("filter id 42 and nlpattribute integrated_gradient");
  ASSERT_EQ(ast.operations.size(), 1u);
  const auto& node = ast.operations[0];
  EXPECT_EQ(node.op, "nlpattribute");
  ASSERT_EQ(node.attrs.size(), 2u);
  EXPECT_EQ(node.attrs[0], AttrValue{kAllTokens});
  EXPECT_EQ(node.attrs[1], AttrValue{std::string("integrated_gradient")});
}

TEST(ParseQuery, CaseAndWhitespaceInsensitive) {
  EXPECT_EQ(parse_query("  FILTER   id 26\tAND Rationalize "), parse_query("filter id 26 and rationalize"));
}

TEST(ParseQuery, EmptyInputIsSyntaxError) {
  try {
    (void)parse_query("");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.position(), 0u);
    EXPECT_FALSE(e.expected().empty());
  }
}

TEST(ParseQuery, ErrorKinds) {
  EXPECT_EQ(code_of("explode"), ErrorCode::UnknownOperation);
  EXPECT_EQ(code_of("filter id x and predict"), ErrorCode::SyntaxError);
  EXPECT_EQ(code_of("filter id 3 and"), ErrorCode::SyntaxError);
  EXPECT_EQ(code_of("predict and filter id 3"), ErrorCode::SyntaxError);
  EXPECT_EQ(code_of("score banana"), ErrorCode::AttributeTypeError);
  EXPECT_EQ(code_of("score"), ErrorCode::AttributeTypeError);
  EXPECT_EQ(code_of("nlpattribute lime topk 3"), ErrorCode::AttributeTypeError);
  EXPECT_EQ(code_of("filter id 1 and filter id 2 or filter id 3 and predict"), ErrorCode::SyntaxError);
  EXPECT_EQ(code_of("predict predict"), ErrorCode::AttributeTypeError);
}

TEST(ParseQuery, RepairValuesFillMissingRequiredAttributes) {
  const auto parsed = parse_query("score", default_catalog(), ParseOptions{true});
  EXPECT_EQ(render_query(parsed.ast), "score accuracy");
  EXPECT_EQ(parsed.repaired_ops, std::vector<std::string>{"score"});
  EXPECT_THROW((void)parse_query("randompredict", default_catalog(), ParseOptions{true}), Error);
}

TEST(ParseQuery, OrBetweenOperationsParsesButDoesNotValidate) {
  const auto ast = parse_query("rationalize or augment");
  ASSERT_EQ(ast.op_links.size(), 1u);
  EXPECT_EQ(ast.op_links[0], Connective::Or);
  ValidationContext ctx;
  ctx.dataset_size = 100;
  ctx.focus_available = true;
  const auto report = validate(ast, default_catalog(), ctx);
  EXPECT_TRUE(report.has(ViolationKind::OrOutsideFilters));
}

TEST(RenderQuery, CanonicalForms) {
  QueryAst ast;
  ast.filters.push_back(ById{26});
  ast.operations.push_back(OpNode{"rationalize", {}});
  EXPECT_EQ(render_query(ast), "filter id 26 and rationalize");

  QueryAst model;
  model.operations.push_back(OpNode{"model", {}});
  EXPECT_EQ(render_query(model), "model");
}

TEST(RenderQuery, OmitsDefaults) {
  EXPECT_EQ(render_query(parse_query("filter id 3 and nlpattribute topk 5 attention")),
            "filter id 3 and nlpattribute topk 5");
  EXPECT_EQ(render_query(parse_query("qatutorial augment")), "qatutorial augment");
  EXPECT_EQ(render_query(parse_query("qatutorial augment expert")), "qatutorial augment expert");
}

TEST(RenderQuery, OrFilterChain) {
  EXPECT_EQ(render_query(parse_query("filter id 1 or filter id 2 and mistakes show")),
            "filter id 1 or filter id 2 and mistakes show");
  EXPECT_EQ(render_query(parse_query("includes COVID and countdata")), "includes covid and countdata");
}

TEST(RenderQuery, InvalidAstThrows) {
  QueryAst pure;
  pure.filters.push_back(ById{1});
  try {
    (void)render_query(pure);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidAst);
  }
  QueryAst unknown;
  unknown.operations.push_back(OpNode{"teleport", {}});
  EXPECT_THROW((void)render_query(unknown), Error);
}

TEST(Validate, AcceptsParseExample) {
  const auto report = validate(parse_query("filter id 26 and rationalize"), default_catalog(), 100);
  EXPECT_TRUE(report.ok()) << report.summary();
}

TEST(Validate, IdOutOfRange) {
  const auto report = validate(parse_query("filter id 7 and predict"), default_catalog(), 5);
  EXPECT_TRUE(report.has(ViolationKind::IdOutOfRange));
}

TEST(Validate, CustomInputIdsAreInScope) {
  ValidationContext ctx;
  ctx.dataset_size = 8;
  ctx.custom_input_ids = {8};
  EXPECT_TRUE(validate(parse_query("filter id 8 and predict"), default_catalog(), ctx).ok());
  EXPECT_FALSE(validate(parse_query("filter id 9 and predict"), default_catalog(), ctx).ok());
}

TEST(Validate, PureFilterHasDedicatedViolation) {
  const auto report = validate(parse_query("filter id 1"), default_catalog(), 10);
  EXPECT_TRUE(report.has(ViolationKind::PureFilter));
}

TEST(Validate, InstanceOperationNeedsScope) {
  const auto& cat = default_catalog();
  EXPECT_TRUE(validate(parse_query("augment"), cat, 10).has(ViolationKind::NoInstanceInScope));
  ValidationContext focused;
  focused.dataset_size = 10;
  focused.focus_available = true;
  EXPECT_TRUE(validate(parse_query("augment"), cat, focused).ok());
  EXPECT_TRUE(validate(parse_query("label"), cat, 10).ok());
}

TEST(Validate, CountBoundedByDatasetSize) {
  const auto& cat = default_catalog();
  EXPECT_TRUE(validate(parse_query("randompredict 5"), cat, 5).ok());
  EXPECT_TRUE(validate(parse_query("randompredict 6"), cat, 5).has(ViolationKind::BadAttribute));
}

TEST(Validate, BadAttributeValues) {
  QueryAst ast;
  ast.operations.push_back(OpNode{"score", {AttrValue{std::string("bleu")}}});
  EXPECT_TRUE(validate(ast, default_catalog(), 10).has(ViolationKind::BadAttribute));
  ast.operations[0] = OpNode{"score", {}};
  EXPECT_TRUE(validate(ast, default_catalog(), 10).has(ViolationKind::BadAttribute));
}

TEST(CanonicalEquality, WhitespaceAndCase) {
  EXPECT_TRUE(canonically_equal("Filter  ID 5 AND predict", "filter id 5 and predict"));
  EXPECT_TRUE(canonically_equal("nlpattribute attention and model", "nlpattribute and model"));
  EXPECT_FALSE(canonically_equal("filter id 5 and predict", "filter id 6 and predict"));
  EXPECT_FALSE(canonically_equal("garbage", "garbage"));
}
