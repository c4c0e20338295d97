#include "xaichat/parsing.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <json.hpp>
#include <numeric>
#include <regex>
#include <sstream>

#include "xaichat/grammar.hpp"
#include "xaichat/text.hpp"
#include "xaichat/validate.hpp"

namespace xaichat {

namespace fs = std::filesystem;

namespace {

std::vector<Demonstration> read_demos(const fs::path& path, const char* value_key) {
  std::string content;
  try {
    content = text::read_file(path.string());
  } catch (const Error&) {
    throw SchemaError(0, "missing prompt file " + path.string());
  }
  std::vector<Demonstration> out;
  std::istringstream in(content);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    const auto doc = nlohmann::json::parse(raw, nullptr, false);
    if (!doc.is_object() || !doc.contains("utterance") || !doc.contains(value_key) ||
        !doc["utterance"].is_string() || !doc[value_key].is_string()) {
      throw SchemaError(line, path.filename().string() + ": expected {\"utterance\", \"" + value_key + "\"}");
    }
    out.push_back({doc["utterance"].get<std::string>(), doc[value_key].get<std::string>()});
  }
  return out;
}

std::string read_template(const fs::path& path) {
  try {
    return text::read_file(path.string());
  } catch (const Error&) {
    throw SchemaError(0, "missing prompt file " + path.string());
  }
}

void check_parse_demo(const Demonstration& d, const Catalog& catalog, const std::string& where) {
  try {
    const auto rendered = render_query(parse_query(d.parse, catalog), catalog);
    if (rendered != d.parse) throw SchemaError(0, where + ": '" + d.parse + "' is not canonical ('" + rendered + "')");
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(0, where + ": '" + d.parse + "': " + e.what());
  }
}

bool contains_operation(const QueryAst& ast, const std::string& op) {
  if (op == "filter") {
    return std::any_of(ast.filters.begin(), ast.filters.end(),
                       [](const FilterNode& f) { return std::holds_alternative<ById>(f); });
  }
  if (op == "includes") {
    return std::any_of(ast.filters.begin(), ast.filters.end(),
                       [](const FilterNode& f) { return std::holds_alternative<Includes>(f); });
  }
  return std::any_of(ast.operations.begin(), ast.operations.end(), [&](const OpNode& n) { return n.op == op; });
}

std::size_t word_count(std::string_view s) { return text::split_whitespace(s).size(); }

ValidationContext validation_context(const ParseContext& ctx) {
  ValidationContext v;
  v.dataset_size = ctx.dataset_size;
  v.custom_input_ids = ctx.custom_input_ids;
  v.focus_available = ctx.focus_id.has_value();
  return v;
}

bool id_addressable(std::int64_t id, const ParseContext& ctx) {
  if (id >= 0 && id < ctx.dataset_size) return true;
  return std::find(ctx.custom_input_ids.begin(), ctx.custom_input_ids.end(), id) != ctx.custom_input_ids.end();
}

GenerationRequest greedy_request(std::string prompt, int max_new_tokens) {
  GenerationRequest req;
  req.prompt = std::move(prompt);
  req.max_new_tokens = max_new_tokens;
  req.stop_sequences = {"\n"};
  req.temperature = 0.0;
  req.seed = 0;
  return req;
}

}  // namespace

// ---------------------------------------------------------------------------
// PromptStore
// ---------------------------------------------------------------------------

PromptStore::PromptStore(std::map<std::string, std::string> templates, std::vector<Demonstration> gd_pool,
                         std::vector<Demonstration> stage1, std::map<std::string, std::vector<Demonstration>> stage2)
    : templates_(std::move(templates)),
      gd_pool_(std::move(gd_pool)),
      stage1_(std::move(stage1)),
      stage2_(std::move(stage2)) {}

std::vector<std::string> PromptStore::required_placeholders(const std::string& name) {
  static const std::map<std::string, std::vector<std::string>> kRequired{
      {"gd", {"demonstrations", "utterance"}},
      {"mp_stage1", {"operations_list", "demonstrations", "utterance"}},
      {"mp_stage2", {"demonstrations", "utterance"}},
      {"predict_fact_checking", {"instance"}},
      {"predict_commonsense_qa", {"instance"}},
      {"rationalize_zero_cot", {"instance"}},
      {"rationalize_plan_and_solve", {"instance"}},
      {"rationalize_opro", {"instance"}},
      {"cfe_fact_checking", {"instance"}},
      {"cfe_commonsense_qa", {"instance"}},
      {"augment_fact_checking", {"instance"}},
      {"augment_commonsense_qa", {"instance"}},
      {"qatutorial", {"preamble", "topic"}},
  };
  auto it = kRequired.find(name);
  return it == kRequired.end() ? std::vector<std::string>{} : it->second;
}

PromptStore PromptStore::load(const std::string& dir, const Catalog& catalog) {
  const fs::path root(dir);
  std::map<std::string, std::string> templates;
  templates["gd"] = read_template(root / "gd.txt");
  templates["mp_stage1"] = read_template(root / "mp_stage1.txt");
  templates["mp_stage2"] = read_template(root / "mp_stage2.txt");
  const fs::path tasks = root / "tasks";
  if (fs::is_directory(tasks)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(tasks)) {
      if (entry.path().extension() == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) templates[f.stem().string()] = read_template(f);
  }
  for (const auto& [name, body] : templates) {
    const auto present = text::placeholders(body);
    for (const auto& p : required_placeholders(name)) {
      if (std::find(present.begin(), present.end(), p) == present.end()) {
        throw SchemaError(0, "template '" + name + "' lacks {" + p + "}");
      }
    }
  }

  auto gd_pool = read_demos(root / "gd_pool.jsonl", "parse");
  if (gd_pool.size() < kMinGdPool) {
    throw SchemaError(0, "gd_pool needs at least " + std::to_string(kMinGdPool) + " demonstrations");
  }
  for (const auto& d : gd_pool) check_parse_demo(d, catalog, "gd_pool");

  auto stage1 = read_demos(root / "mp_stage1_demos.jsonl", "op");
  for (const auto& d : stage1) {
    const auto* spec = catalog.find(d.parse);
    if (spec == nullptr || spec->is_logic()) throw SchemaError(0, "mp_stage1_demos: unknown operation " + d.parse);
  }

  std::map<std::string, std::vector<Demonstration>> stage2;
  for (const auto& name : catalog.operation_names()) {
    auto demos = read_demos(root / "mp_stage2" / (name + ".jsonl"), "parse");
    if (demos.size() < kMinStage2 || demos.size() > kMaxStage2) {
      throw SchemaError(0, "mp_stage2/" + name + ".jsonl needs 2-7 demonstrations, has " +
                               std::to_string(demos.size()));
    }
    for (const auto& d : demos) {
      check_parse_demo(d, catalog, "mp_stage2/" + name);
      if (!contains_operation(parse_query(d.parse, catalog), name)) {
        throw SchemaError(0, "mp_stage2/" + name + ": '" + d.parse + "' does not use " + name);
      }
    }
    stage2.emplace(name, std::move(demos));
  }
  return PromptStore(std::move(templates), std::move(gd_pool), std::move(stage1), std::move(stage2));
}

const std::vector<Demonstration>& PromptStore::stage2_demos(const std::string& op) const {
  auto it = stage2_.find(op);
  if (it == stage2_.end()) throw Error(ErrorCode::NotFound, "no stage-2 demonstrations for '" + op + "'");
  return it->second;
}

const std::string& PromptStore::get_template(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw Error(ErrorCode::NotFound, "no prompt template '" + name + "'");
  return it->second;
}

PromptStore PromptStore::with_overrides(const std::map<std::string, std::string>& overrides) const {
  PromptStore copy = *this;
  for (const auto& [name, body] : overrides) {
    if (templates_.find(name) == templates_.end()) {
      throw Error(ErrorCode::InvalidArgument, "unknown prompt template '" + name + "'");
    }
    const auto present = text::placeholders(body);
    for (const auto& p : required_placeholders(name)) {
      if (std::find(present.begin(), present.end(), p) == present.end()) {
        throw Error(ErrorCode::InvalidArgument, "override for '" + name + "' must keep {" + p + "}");
      }
    }
    copy.templates_[name] = body;
  }
  return copy;
}

// ---------------------------------------------------------------------------
// Free helpers
// ---------------------------------------------------------------------------

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::GD: return "gd";
    case Strategy::MP: return "mp";
    case Strategy::NearestNeighbor: return "nn";
  }
  return "gd";
}

std::string_view to_string(Repair r) {
  switch (r) {
    case Repair::FuzzyOpMatch: return "FuzzyOpMatch";
    case Repair::IdHallucinationRemoved: return "IdHallucinationRemoved";
    case Repair::IdExtractedFromUtterance: return "IdExtractedFromUtterance";
    case Repair::DefaultsFilled: return "DefaultsFilled";
  }
  return "";
}

Strategy strategy_from_string(std::string_view s) {
  const std::string key = text::to_lower(text::trim(s));
  if (key == "gd" || key == "guided_decoding") return Strategy::GD;
  if (key == "mp" || key == "multi_prompt") return Strategy::MP;
  if (key == "nn" || key == "nearest_neighbor") return Strategy::NearestNeighbor;
  throw Error(ErrorCode::InvalidArgument, "unknown parsing strategy '" + std::string(s) + "'");
}

bool ParseResult::has_repair(Repair r) const {
  return std::find(repairs.begin(), repairs.end(), r) != repairs.end();
}

std::optional<std::int64_t> extract_instance_id(std::string_view utterance) {
  static const std::regex kPattern(R"((?:\b(?:id|instance|sample|example|item)|#)\s*[#:]?\s*(\d+))",
                                   std::regex::ECMAScript | std::regex::icase);
  const std::string s(utterance);
  std::smatch m;
  if (!std::regex_search(s, m, kPattern)) return std::nullopt;
  std::int64_t id = 0;
  const std::string digits = m[1].str();
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
  if (ec != std::errc{}) return std::nullopt;
  return id;
}

bool id_is_grounded(std::int64_t id, std::string_view utterance, const ParseContext& ctx) {
  if (ctx.focus_id && *ctx.focus_id == id) return true;
  if (std::find(ctx.custom_input_ids.begin(), ctx.custom_input_ids.end(), id) != ctx.custom_input_ids.end()) {
    return true;
  }
  for (const auto& lit : text::number_literals(utterance)) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(lit.data(), lit.data() + lit.size(), v);
    if (ec == std::errc{} && v == id) return true;
  }
  return false;
}

std::string operations_listing(const Catalog& catalog) {
  std::string out;
  for (const auto& spec : catalog.entries()) {
    if (spec.is_logic()) continue;
    out += spec.name + ": " + spec.description + "\n";
  }
  return out;
}

std::string format_demonstrations(const std::vector<Demonstration>& demos) {
  std::string out;
  for (const auto& d : demos) out += "Input: " + d.utterance + "\nOutput: " + d.parse + "\n\n";
  return out;
}

// ---------------------------------------------------------------------------
// ParsingEngine
// ---------------------------------------------------------------------------

ParsingEngine::ParsingEngine(std::shared_ptr<GenerationBackend> generator,
                             std::shared_ptr<SimilarityService> similarity, const Catalog& catalog)
    : generator_(std::move(generator)),
      similarity_(similarity ? std::move(similarity) : std::make_shared<SimilarityService>()),
      catalog_(catalog) {
  if (!generator_) throw Error(ErrorCode::InvalidArgument, "parsing needs a generation backend");
}

ParseResult ParsingEngine::parse(Strategy strategy, const std::string& utterance, const PromptStore& store,
                                 const ParseContext& ctx) const {
  switch (strategy) {
    case Strategy::GD: return parse_gd(utterance, store, ctx);
    case Strategy::MP: return parse_mp(utterance, store, ctx);
    case Strategy::NearestNeighbor: return parse_nn(utterance, store, ctx);
  }
  return parse_gd(utterance, store, ctx);
}

std::vector<Demonstration> ParsingEngine::select_gd_demos(const std::string& utterance, const PromptStore& store,
                                                          const ParseContext& ctx) const {
  const auto& pool = store.gd_pool();
  std::vector<std::string> utterances;
  utterances.reserve(pool.size());
  for (const auto& d : pool) utterances.push_back(d.utterance);
  const auto scores = similarity_->similarities(utterance, utterances);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (order.size() > kGdShots) order.resize(kGdShots);

  std::vector<Demonstration> chosen;
  for (auto i : order) chosen.push_back(pool[i]);
  const std::string& tmpl = store.get_template("gd");
  auto size_of = [&](const std::vector<Demonstration>& demos) {
    return word_count(text::fill_placeholders(
        tmpl, {{"demonstrations", format_demonstrations(demos)}, {"utterance", utterance},
               {"operations_list", operations_listing(catalog_)}}));
  };
  while (!chosen.empty() && size_of(chosen) > ctx.prompt_budget) chosen.pop_back();
  return chosen;
}

std::string ParsingEngine::build_gd_prompt(const std::string& utterance, const PromptStore& store,
                                           const ParseContext& ctx) const {
  return text::fill_placeholders(store.get_template("gd"),
                                 {{"demonstrations", format_demonstrations(select_gd_demos(utterance, store, ctx))},
                                  {"utterance", utterance},
                                  {"operations_list", operations_listing(catalog_)}});
}

std::string ParsingEngine::build_stage1_prompt(const std::string& utterance, const PromptStore& store) const {
  return text::fill_placeholders(store.get_template("mp_stage1"),
                                 {{"operations_list", operations_listing(catalog_)},
                                  {"demonstrations", format_demonstrations(store.stage1_demos())},
                                  {"utterance", utterance}});
}

std::string ParsingEngine::build_stage2_prompt(const std::string& utterance, const std::string& op,
                                               const PromptStore& store) const {
  const auto& spec = catalog_.lookup(op);
  return text::fill_placeholders(store.get_template("mp_stage2"),
                                 {{"operation", op},
                                  {"description", spec.description},
                                  {"demonstrations", format_demonstrations(store.stage2_demos(op))},
                                  {"utterance", utterance}});
}

std::optional<std::pair<std::string, bool>> ParsingEngine::resolve_operation(const std::string& raw,
                                                                             double* score) const {
  const std::string line = text::to_lower(text::trim(raw.substr(0, raw.find('\n'))));
  const auto words = text::split_whitespace(line);
  if (!words.empty()) {
    std::string head;
    for (char c : words.front()) {
      if ((c >= 'a' && c <= 'z') || c == '_') head.push_back(c);
    }
    const auto* spec = catalog_.find(head);
    if (spec != nullptr && !spec->is_logic()) {
      if (score != nullptr) *score = 1.0;
      return std::make_pair(spec->name, false);
    }
  }
  if (line.empty()) return std::nullopt;
  const auto names = catalog_.operation_names();
  const auto sims = similarity_->similarities(line, names);
  const auto best = static_cast<std::size_t>(std::max_element(sims.begin(), sims.end()) - sims.begin());
  if (score != nullptr) *score = sims[best];
  if (sims[best] < kFuzzyThreshold) return std::nullopt;
  return std::make_pair(names[best], true);
}

bool ParsingEngine::finish(QueryAst& ast, const std::string& utterance, const ParseContext& ctx,
                           std::vector<Repair>& repairs) const {
  const auto before = ast.filters.size();
  ast.filters.erase(std::remove_if(ast.filters.begin(), ast.filters.end(),
                                   [&](const FilterNode& f) {
                                     const auto* by_id = std::get_if<ById>(&f);
                                     return by_id != nullptr && !id_is_grounded(by_id->id, utterance, ctx);
                                   }),
                    ast.filters.end());
  if (ast.filters.size() != before) repairs.push_back(Repair::IdHallucinationRemoved);

  if (ctx.small_model) {
    const bool has_id = std::any_of(ast.filters.begin(), ast.filters.end(),
                                    [](const FilterNode& f) { return std::holds_alternative<ById>(f); });
    const bool union_chain = !ast.filters.empty() && ast.connective == Connective::Or;
    if (!has_id && !union_chain) {
      if (auto id = extract_instance_id(utterance); id && id_addressable(*id, ctx)) {
        ast.filters.insert(ast.filters.begin(), ById{*id});
        repairs.push_back(Repair::IdExtractedFromUtterance);
      }
    }
  }
  ast = normalize(std::move(ast), catalog_);
  return validate(ast, catalog_, validation_context(ctx)).ok();
}

std::optional<QueryAst> ParsingEngine::repair(const std::string& raw, const std::string& utterance,
                                              const ParseContext& ctx, std::vector<Repair>& repairs) const {
  std::optional<QueryAst> ast;
  try {
    ast = parse_query(raw, catalog_);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AttributeTypeError) return std::nullopt;
    try {
      auto lenient = parse_query(raw, catalog_, ParseOptions{true});
      if (lenient.repaired_ops.empty()) return std::nullopt;
      ast = std::move(lenient.ast);
      repairs.push_back(Repair::DefaultsFilled);
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  if (!finish(*ast, utterance, ctx, repairs)) return std::nullopt;
  return ast;
}

ParseResult ParsingEngine::parse_gd(const std::string& utterance, const PromptStore& store,
                                    const ParseContext& ctx) const {
  ParseResult result;
  result.strategy = Strategy::GD;
  auto req = greedy_request(build_gd_prompt(utterance, store, ctx), ctx.max_new_tokens);
  if (generator_->supports_grammar()) {
    GrammarContext gctx;
    gctx.dataset_size = ctx.dataset_size;
    gctx.custom_input_ids = ctx.custom_input_ids;
    gctx.focus_available = ctx.focus_id.has_value();
    try {
      req.grammar = compile_grammar(catalog_, gctx).text;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyContext) throw;
    }
  }
  GenerationResponse resp;
  try {
    resp = generator_->generate(req);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::GrammarUnsupported) throw;
    req.grammar.reset();
    resp = generator_->generate(req);
  }
  result.raw.push_back(resp.text);
  auto ast = repair(resp.text, utterance, ctx, result.repairs);
  if (!ast) throw ParseFailure("could not parse '" + utterance + "'", Strategy::GD, result.raw);
  result.ast = std::move(*ast);
  return result;
}

ParseResult ParsingEngine::parse_mp(const std::string& utterance, const PromptStore& store,
                                    const ParseContext& ctx) const {
  ParseResult result;
  result.strategy = Strategy::MP;
  const auto stage1 = generator_->generate(greedy_request(build_stage1_prompt(utterance, store), ctx.max_new_tokens));
  result.raw.push_back(stage1.text);
  double score = 0;
  const auto resolved = resolve_operation(stage1.text, &score);
  if (!resolved) {
    throw ParseFailure("no operation matches '" + stage1.text + "'", Strategy::MP, result.raw);
  }
  const std::string op = resolved->first;
  result.main_op = op;
  result.confidence = score;
  if (resolved->second) result.repairs.push_back(Repair::FuzzyOpMatch);

  const auto stage2 =
      generator_->generate(greedy_request(build_stage2_prompt(utterance, op, store), ctx.max_new_tokens));
  result.raw.push_back(stage2.text);
  std::vector<Repair> stage2_repairs;
  auto ast = repair(stage2.text, utterance, ctx, stage2_repairs);
  if (ast && contains_operation(*ast, op)) {
    result.repairs.insert(result.repairs.end(), stage2_repairs.begin(), stage2_repairs.end());
    result.ast = std::move(*ast);
    return result;
  }

  // Stage 2 failed or drifted to another operation: fall back to the bare stage-1 operation.
  const auto* spec = catalog_.find(op);
  if (spec == nullptr || spec->is_filter()) {
    throw ParseFailure("could not complete a query for '" + op + "'", Strategy::MP, result.raw);
  }
  std::vector<Repair> fallback_repairs;
  std::optional<QueryAst> bare;
  try {
    auto lenient = parse_query(op, catalog_, ParseOptions{true});
    if (!lenient.repaired_ops.empty()) fallback_repairs.push_back(Repair::DefaultsFilled);
    bare = std::move(lenient.ast);
  } catch (const Error&) {
    throw ParseFailure("operation '" + op + "' needs attributes the model did not supply", Strategy::MP, result.raw);
  }
  if (!finish(*bare, utterance, ctx, fallback_repairs)) {
    throw ParseFailure("could not complete a query for '" + op + "'", Strategy::MP, result.raw);
  }
  result.repairs.insert(result.repairs.end(), fallback_repairs.begin(), fallback_repairs.end());
  result.ast = std::move(*bare);
  return result;
}

ParseResult ParsingEngine::parse_nn(const std::string& utterance, const PromptStore& store,
                                    const ParseContext& /*ctx*/) const {
  const auto& pool = store.gd_pool();
  std::vector<std::string> utterances;
  utterances.reserve(pool.size());
  for (const auto& d : pool) utterances.push_back(d.utterance);
  const auto scores = similarity_->similarities(utterance, utterances);
  const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  ParseResult result;
  result.strategy = Strategy::NearestNeighbor;
  result.ast = parse_query(pool[best].parse, catalog_);
  result.raw.push_back(pool[best].parse);
  result.confidence = scores[best];
  return result;
}

}  // namespace xaichat
