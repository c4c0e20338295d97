// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if any fail.

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "xaichat/config.hpp"
#include "xaichat/eval.hpp"
#include "xaichat/grammar.hpp"
#include "xaichat/server.hpp"
#include "xaichat/text.hpp"
#include "xaichat/validate.hpp"

using namespace xaichat;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kData = XAICHAT_DATA_DIR;
const std::string kFixtures = XAICHAT_FIXTURES_DIR;
const std::string kSource = XAICHAT_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

AppConfig shipped_config() {
  return load_config(kSource + "/config/xaichat.conf",
                     [](const std::string&) -> std::optional<std::string> { return std::nullopt; });
}

const PromptStore& prompts() {
  static const PromptStore s = PromptStore::load(kData + "/prompts");
  return s;
}

const ResponseTemplates& templates() {
  static const ResponseTemplates t = ResponseTemplates::load(kData + "/templates");
  return t;
}

std::shared_ptr<const Dataset> fact_mini() {
  static const auto ds = std::make_shared<const Dataset>(load_dataset(kFixtures + "/covid_fact_mini.jsonl"));
  return ds;
}

std::string line_after(const std::string& prompt, const std::string& key) {
  const auto pos = prompt.rfind(key);
  if (pos == std::string::npos) return {};
  const auto start = pos + key.size();
  return prompt.substr(start, prompt.find('\n', start) - start);
}

// --- DSL and grammar ---------------------------------------------------------------------------

Outcome dsl_round_trip() {
  const auto t0 = Clock::now();
  const Grammar g(compile_grammar(default_catalog(), GrammarContext{60}));
  std::mt19937_64 rng(20240);
  std::vector<std::string> samples;
  for (int i = 0; i < 1000; ++i) samples.push_back(g.sample(rng));
  int bad = 0;
  std::string first_bad;
  for (const auto& s : samples) {
    const auto ast = parse_query(s);
    const bool ok = render_query(ast) == s && validate(ast, default_catalog(), 60).ok();
    if (!ok && bad++ == 0) first_bad = s;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 1.0, "1000 queries, " + std::to_string(bad) + " failures, " + fmt(secs) + " s including sampling (< 1 s)" +
                                      (first_bad.empty() ? "" : ", first: " + first_bad)};
}

Outcome grammar_soundness() {
  GrammarContext gctx;
  gctx.dataset_size = 40;
  gctx.custom_input_ids = {40, 41};
  gctx.focus_available = true;
  const Grammar g(compile_grammar(default_catalog(), gctx));
  ValidationContext vctx;
  vctx.dataset_size = 40;
  vctx.custom_input_ids = {40, 41};
  vctx.focus_available = true;
  std::mt19937_64 rng(5);
  int failures = 0;
  std::set<std::string> ops;
  for (int i = 0; i < 500; ++i) {
    const auto s = g.sample(rng);
    try {
      const auto ast = parse_query(s);
      if (!validate(ast, default_catalog(), vctx).ok() || !g.derives(s)) ++failures;
      for (const auto& op : operation_names(ast)) ops.insert(op);
    } catch (const Error&) {
      ++failures;
    }
  }
  return {failures == 0, "500 samples, " + std::to_string(failures) + " failures, " + std::to_string(ops.size()) +
                             " distinct operations seen"};
}

// --- Parsing -----------------------------------------------------------------------------------

Outcome mp_worked_example(const Runtime& rt) {
  ParseContext ctx;
  ctx.dataset_size = 60;
  ctx.max_new_tokens = 10;
  const auto a = render_query(
      rt.services->parser->parse(Strategy::MP, "show attributions for id 42 with integrated gradients", prompts(), ctx)
          .ast);
  const auto b = render_query(
      rt.services->parser->parse(Strategy::MP, "Why did the model predict this answer for id 26?", prompts(), ctx).ast);
  const bool pass = a == "filter id 42 and nlpattribute integrated_gradient" && b == "filter id 26 and rationalize";
  return {pass, "\"" + a + "\"; \"" + b + "\""};
}

// Ids named in a canonical query string, read off the text.
std::vector<std::int64_t> ids_in_text(const std::string& canonical) {
  std::vector<std::int64_t> out;
  static const std::regex re("\\bid (\\d+)\\b");
  for (std::sregex_iterator it(canonical.begin(), canonical.end(), re), end; it != end; ++it) {
    out.push_back(std::stoll((*it)[1].str()));
  }
  return out;
}

Outcome hallucination_filter() {
  std::mt19937_64 rng(4242);
  auto gen = std::make_shared<MockGenerator>(false);
  std::string next;
  gen->set_handler([&](const GenerationRequest& req) -> std::optional<std::string> {
    if (req.prompt.find("Pick the operation") != std::string::npos) return line_after(next, "op=");
    return next.substr(0, next.find("\nop="));
  });
  ParsingEngine engine(gen, nullptr);
  const std::vector<std::string> ops{"predict", "rationalize", "cfe", "augment", "show", "nlpattribute", "similarity"};
  int leaked = 0, repaired = 0, rejected = 0;
  for (int i = 0; i < 100; ++i) {
    const auto real = static_cast<std::int64_t>(rng() % 50);
    const auto fake = 100 + static_cast<std::int64_t>(rng() % 800);
    const auto op = ops[rng() % ops.size()];
    const int shape = static_cast<int>(rng() % 3);
    std::string utterance, output;
    if (shape == 0) {
      utterance = "tell me about item " + std::to_string(real);
      output = "filter id " + std::to_string(fake) + " or filter id " + std::to_string(real) + " and " + op;
    } else if (shape == 1) {
      utterance = "do the same for this one";
      output = "filter id " + std::to_string(fake) + " and " + op;
    } else {
      utterance = "what about the custom input";
      output = "filter id " + std::to_string(fake) + " and filter id " + std::to_string(fake + 1) + " and " + op;
    }
    next = output + "\nop=" + op;
    ParseContext ctx;
    ctx.dataset_size = 1000;
    ctx.custom_input_ids = {1000};
    if (rng() % 2 == 0) ctx.focus_id = static_cast<std::int64_t>(rng() % 50);
    const auto strategy = rng() % 2 == 0 ? Strategy::GD : Strategy::MP;
    try {
      const auto result = engine.parse(strategy, utterance, prompts(), ctx);
      const auto canonical = render_query(result.ast);
      ++repaired;
      for (auto id : ids_in_text(canonical)) {
        const bool in_text = std::regex_search(utterance, std::regex("(^|\\D)" + std::to_string(id) + "(\\D|$)"));
        const bool custom = id == 1000;
        const bool focus = ctx.focus_id && *ctx.focus_id == id;
        if (!in_text && !custom && !focus) {
          ++leaked;
          break;
        }
      }
    } catch (const ParseFailure&) {
      ++rejected;
    }
  }
  return {leaked == 0, "100 outputs, " + std::to_string(leaked) + " with out-of-context ids (" +
                           std::to_string(repaired) + " repaired, " + std::to_string(rejected) + " unparseable)"};
}

// --- Evaluation harness ------------------------------------------------------------------------

const Goldset& shipped_gold() {
  static const Goldset g = build_goldset(kFixtures + "/gold.jsonl", 60);
  return g;
}

std::shared_ptr<MockGenerator> table_generator(std::map<std::string, std::string> table) {
  auto gen = std::make_shared<MockGenerator>(false);
  gen->set_handler([table = std::move(table)](const GenerationRequest& req) -> std::optional<std::string> {
    auto it = table.find(line_after(req.prompt, "Input: "));
    return it == table.end() ? std::string("???") : it->second;
  });
  return gen;
}

Outcome harness_calibration() {
  const auto& gold = shipped_gold();
  auto sim = std::make_shared<SimilarityService>(std::make_shared<MockEmbedder>());
  // Every gold parse fits in 20 new tokens; at 10 the longest ones are truncated by design.
  EvalOptions opts;
  opts.max_new_tokens = 20;

  std::map<std::string, std::string> oracle;
  for (const auto& p : gold.pairs) oracle[p.utterance] = p.gold_parse;
  ParsingEngine oracle_engine(table_generator(oracle), sim);
  const auto perfect = eval_parsing(gold, Strategy::GD, oracle_engine, prompts(), opts, "oracle");

  Goldset g120 = gold;
  g120.pairs.resize(120);
  std::map<std::string, std::string> corrupt;
  for (std::size_t i = 0; i < g120.pairs.size(); ++i) {
    corrupt[g120.pairs[i].utterance] = i % 4 == 3 ? "%%" : g120.pairs[i].gold_parse;
  }
  ParsingEngine corrupt_engine(table_generator(corrupt), sim);
  const auto quarter = eval_parsing(g120, Strategy::GD, corrupt_engine, prompts(), opts, "corrupt");

  // Brute-force NN oracle over raw trigram vectors.
  ParsingEngine nn_engine(std::make_shared<MockGenerator>(false), sim);
  const auto nn = eval_parsing(gold, Strategy::NearestNeighbor, nn_engine, prompts(), EvalOptions{}, "nn");
  const auto& pool = prompts().gd_pool();
  std::set<std::size_t> oracle_failures;
  for (std::size_t i = 0; i < gold.pairs.size(); ++i) {
    const auto q = MockEmbedder::embed_one(gold.pairs[i].utterance).values;
    double best = -2;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      const auto d = MockEmbedder::embed_one(pool[j].utterance).values;
      double dot = 0, nq = 0, nd = 0;
      for (std::size_t k = 0; k < q.size(); ++k) {
        dot += q[k] * d[k];
        nq += q[k] * q[k];
        nd += d[k] * d[k];
      }
      const double c = nq > 0 && nd > 0 ? dot / std::sqrt(nq * nd) : 0.0;
      if (c > best + 1e-12) {
        best = c;
        arg = j;
      }
    }
    if (render_query(parse_query(pool[arg].parse)) != gold.pairs[i].gold_parse) oracle_failures.insert(i);
  }
  std::set<std::size_t> nn_failures;
  for (const auto& f : nn.failures) nn_failures.insert(f.index);

  const bool pass =
      perfect.accuracy_percent() == "100.00" && quarter.total == 120 && quarter.accuracy_percent() == "75.00" &&
      nn_failures == oracle_failures;
  return {pass, "oracle " + perfect.accuracy_percent() + "%, every-4th corrupted " + quarter.accuracy_percent() +
                    "% of " + std::to_string(quarter.total) + ", nn " + nn.accuracy_percent() + "% vs scan oracle " +
                    fmt(100.0 * static_cast<double>(gold.pairs.size() - oracle_failures.size()) /
                            static_cast<double>(gold.pairs.size()),
                        2) +
                    "% (" + (nn_failures == oracle_failures ? "same" : "different") + " pairs)"};
}

Outcome shipped_goldset() {
  const auto& g = shipped_gold();
  std::set<std::string> ops;
  int invalid = 0;
  for (const auto& p : g.pairs) {
    const auto ast = parse_query(p.gold_parse);
    if (render_query(ast) != p.gold_parse || !validate(ast, default_catalog(), 60).ok()) ++invalid;
    for (const auto& op : operation_names(ast)) ops.insert(op);
    for (const auto& f : ast.filters) ops.insert(std::holds_alternative<ById>(f) ? "filter" : "includes");
  }
  const bool pass = g.pairs.size() >= 119 && ops.size() == 21 && invalid == 0;
  return {pass, std::to_string(g.pairs.size()) + " pairs, " + std::to_string(ops.size()) + "/21 operations, " +
                    std::to_string(invalid) + " invalid"};
}

// --- Executor ----------------------------------------------------------------------------------

std::shared_ptr<MockGenerator> label_oracle(std::shared_ptr<const Dataset> ds, std::function<bool(std::int64_t)> flip) {
  auto gen = std::make_shared<MockGenerator>(false);
  gen->set_handler([ds, flip](const GenerationRequest& req) -> std::optional<std::string> {
    const auto claim = line_after(req.prompt, "Claim: ");
    for (const auto& inst : ds->instances) {
      if (inst.primary_text() != claim || !inst.gold_label) continue;
      int label = *inst.gold_label;
      if (flip(inst.id)) label = 1 - label;
      return ds->label_names[static_cast<std::size_t>(label)];
    }
    return std::string("SUPPORT");
  });
  return gen;
}

// correct/N and 1 - mistakes/N can differ in the last bit.
constexpr double kTol = 1e-12;

Outcome executor_identities() {
  const auto ds = fact_mini();
  const auto flip = [](std::int64_t id) { return id == 1 || id == 4 || id == 6; };
  auto make = [&] {
    return std::make_unique<Executor>(
        ExecutorBackends{label_oracle(ds, flip), std::make_shared<MockAttributor>(), std::make_shared<SimilarityService>()},
        templates());
  };
  int bad_accuracy = 0, bad_labels = 0, bad_compose = 0, subsets = 0;
  {
    DataStore store(ds);
    PredictionCache cache;
    std::mt19937_64 rng(1);
    ExecutionContext ctx{&store, &cache, &prompts(), &rng};
    auto ex = make();
    std::vector<BackendCall> calls;
    const auto all = store.all();
    for (unsigned mask = 1; mask < (1u << all.size()); ++mask) {
      std::vector<const Instance*> subset;
      for (std::size_t i = 0; i < all.size(); ++i) {
        if (mask & (1u << i)) subset.push_back(all[i]);
      }
      ++subsets;
      const auto s = ex->score(subset, "accuracy", ctx, calls);
      const auto m = ex->mistakes(subset, "count", ctx, calls);
      if (std::abs(s.value - (1.0 - static_cast<double>(m.count) / static_cast<double>(subset.size()))) > kTol) {
        ++bad_accuracy;
      }
    }
  }

  std::mt19937_64 rng(2024);
  const std::vector<std::string> tokens{"covid", "vaccine", "masks", "the", "virus", "zebra"};
  const std::vector<std::string> ops{"countdata", "label", "mistakes count", "score accuracy"};
  auto has_token = [&](std::int64_t id, const std::string& token) {
    const auto words = text::word_tokens(ds->instances[static_cast<std::size_t>(id)].searchable_text());
    return std::find(words.begin(), words.end(), token) != words.end();
  };
  for (int i = 0; i < 50; ++i) {
    const auto token = tokens[rng() % tokens.size()];
    const auto a = static_cast<std::int64_t>(rng() % 8), b = static_cast<std::int64_t>(rng() % 8);
    std::string filter;
    std::set<std::int64_t> expected;
    switch (rng() % 3) {
      case 0:
        filter = "includes " + token;
        for (std::int64_t k = 0; k < 8; ++k) {
          if (has_token(k, token)) expected.insert(k);
        }
        break;
      case 1:
        filter = "filter id " + std::to_string(a) + " or filter id " + std::to_string(b);
        expected = {a, b};
        break;
      default:
        filter = "filter id " + std::to_string(a) + " and includes " + token;
        if (has_token(a, token)) expected.insert(a);
    }
    std::int64_t wrong = 0;
    std::map<std::string, std::int64_t> gold_counts;
    for (auto id : expected) {
      wrong += flip(id);
      ++gold_counts[ds->label_name(ds->instances[static_cast<std::size_t>(id)].gold_label)];
    }
    const auto op = ops[rng() % ops.size()];
    DataStore store(ds);
    PredictionCache cache;
    std::mt19937_64 run_rng(3);
    ExecutionContext ctx{&store, &cache, &prompts(), &run_rng};
    auto ex = make();
    const auto result = ex->execute(parse_query(filter + " and " + op), ctx);
    if (std::set<std::int64_t>(result.scope.begin(), result.scope.end()) != expected) {
      ++bad_compose;
      std::cerr << "composed scope mismatch: " << filter << "\n";
      continue;
    }
    const auto& payload = result.last().payload;
    const auto n = static_cast<std::int64_t>(expected.size());
    bool ok = true;
    if (op == "countdata") {
      ok = std::get<CountValue>(payload).count == n;
    } else if (op == "label") {
      std::int64_t total = 0;
      for (const auto& [name, count] : std::get<Distribution>(payload).counts) {
        total += count;
        ok = ok && count == gold_counts[name];
      }
      // Label counts sum to countdata over the same filter.
      DataStore s2(ds);
      PredictionCache c2;
      ExecutionContext ctx2{&s2, &c2, &prompts(), &run_rng};
      const auto count = std::get<CountValue>(ex->execute(parse_query(filter + " and countdata"), ctx2).last().payload);
      if (total != count.count || total != n) ++bad_labels;
    } else if (op == "mistakes count") {
      ok = std::get<MistakeReport>(payload).count == wrong;
    } else if (n == 0) {
      ok = std::holds_alternative<MetaText>(payload);
    } else {
      ok = std::abs(std::get<ScoreReport>(payload).value - (1.0 - static_cast<double>(wrong) / static_cast<double>(n))) <=
           kTol;
    }
    if (!ok) {
      ++bad_compose;
      std::cerr << "composed mismatch: " << filter << " and " << op << "\n";
    }
  }
  const bool pass = bad_accuracy == 0 && bad_labels == 0 && bad_compose == 0;
  return {pass, std::to_string(subsets) + " subsets (" + std::to_string(bad_accuracy) +
                    " accuracy mismatches at 1e-12), label/countdata mismatches " + std::to_string(bad_labels) +
                    ", 50 composed queries with " + std::to_string(bad_compose) + " mismatches"};
}

// --- Augmentation ------------------------------------------------------------------------------

std::shared_ptr<MockGenerator> augment_generator(std::function<std::string(const std::string&)> rewrite,
                                                 std::function<bool(std::int64_t)> flip) {
  auto ds = fact_mini();
  auto gen = std::make_shared<MockGenerator>(false);
  gen->set_handler([ds, rewrite, flip](const GenerationRequest& req) -> std::optional<std::string> {
    const auto claim = line_after(req.prompt, "Claim: ");
    if (req.prompt.find("Paraphrased claim:") != std::string::npos) return rewrite(claim);
    for (const auto& inst : ds->instances) {
      const bool original = inst.primary_text() == claim;
      const bool paraphrase = !original && rewrite(inst.primary_text()) == claim;
      if (!original && !paraphrase) continue;
      int label = *inst.gold_label;
      if (paraphrase && flip(inst.id)) label = 1 - label;
      return ds->label_names[static_cast<std::size_t>(label)];
    }
    return std::string("no idea");
  });
  return gen;
}

Outcome augmentation_calibration() {
  auto sim = std::make_shared<SimilarityService>(std::make_shared<MockEmbedder>());
  Executor identity(ExecutorBackends{augment_generator([](const std::string& s) { return s; },
                                                      [](std::int64_t) { return false; }),
                                     nullptr, sim},
                    templates());
  const auto a = eval_augmentation(fact_mini(), identity, prompts(), *sim, 8, 1);
  Executor half(ExecutorBackends{augment_generator([](const std::string& s) { return s + " indeed"; },
                                                  [](std::int64_t id) { return id % 2 == 0; }),
                                 nullptr, sim},
                templates());
  const auto b = eval_augmentation(fact_mini(), half, prompts(), *sim, 8, 1);
  const bool pass = a.consistency == 1.0 && std::abs(a.fluency - 1.0) <= 1e-6 && b.consistency == 0.5;
  return {pass, "identity consistency " + fmt(a.consistency, 6) + " fluency " + fmt(a.fluency, 9) +
                    ", half-flip consistency " + fmt(b.consistency, 6)};
}

// --- Dialogue ----------------------------------------------------------------------------------

Outcome suggestion_fuzz(const Runtime& rt) {
  const std::vector<std::string> pool{
      "show attributions for id 42 with integrated gradients",
      "why did the model predict id 7?",
      "predict id 12",
      "show me id 3",
      "give me a counterfactual for id 9",
      "paraphrase id 11",
      "instances similar to id 5",
      "what is the accuracy",
      "show the mistakes",
      "how many instances mention vaccine",
      "what labels are there",
      "what are the keywords",
      "tell me about the dataset",
      "tell me about the model",
      "who are you",
      "what can you do",
      "what is a counterfactual explanation",
      "predict 5 random instances",
      "search the web for id 4",
      "why",
      "explain this one",
      "yes",
      "yes please",
      "sure",
      "no thanks",
      "no, what is the f1 score",
      "blorp",
  };
  int repeats = 0, executed_offered = 0, turns = 0, replay_mismatch = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Session s("fuzz" + std::to_string(seed), rt.services, seed % 2 ? "ecqa" : "covid_fact", seed);
    std::mt19937_64 pick(seed * 7919 + 1);
    std::set<std::string> offered;
    std::set<std::string> executed;
    for (int t = 0; t < 200; ++t) {
      const auto& turn = s.handle_turn(pool[pick() % pool.size()]);
      ++turns;
      if (turn.kind == TurnKind::Executed && turn.parse) {
        for (const auto& op : operation_names(parse_query(*turn.parse))) executed.insert(op);
      }
      if (!turn.suggestion) continue;
      if (!offered.insert(turn.suggestion->op).second) ++repeats;
      if (executed.count(turn.suggestion->op)) ++executed_offered;
    }
    const auto text = s.export_text();
    const auto replayed = Session::replay(nlohmann::json::parse(text), rt.services);
    if (replayed->export_text() != text) ++replay_mismatch;
  }
  const bool pass = repeats == 0 && executed_offered == 0 && replay_mismatch == 0;
  return {pass, std::to_string(turns) + " turns, " + std::to_string(repeats) + " repeated suggestions, " +
                    std::to_string(executed_offered) + " suggestions of executed ops, " +
                    std::to_string(replay_mismatch) + "/5 replays differ"};
}

// --- HTTP API ----------------------------------------------------------------------------------

Outcome api_smoke() {
  auto config = shipped_config();
  config.embedder.kind = "none";
  config.attributor.kind = "none";
  const auto t0 = Clock::now();
  ApiServer server(build_runtime(config));
  const int port = server.bind_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  while (!server.running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));

  std::vector<std::string> problems;
  auto check = [&](const httplib::Result& r, int status, const std::string& what) -> nlohmann::json {
    if (!r || r->status != status) {
      problems.push_back(what + " -> " + (r ? std::to_string(r->status) : "no response"));
      return nlohmann::json();
    }
    return nlohmann::json::parse(r->body, nullptr, false);
  };
  {
    httplib::Client c("127.0.0.1", port);
    const auto created = check(c.Post("/api/sessions", "{}", "application/json"), 201, "create");
    const std::string id = created.value("session_id", "");
    const std::string base = "/api/sessions/" + id;
    for (const std::string text : {"predict id 12", "yes", "what is the accuracy"}) {
      check(c.Post(base + "/turns", nlohmann::json{{"text", text}}.dump(), "application/json"), 200, text);
    }
    check(c.Put(base + "/settings", R"({"expertise": "Beginner", "cot_strategy": "PlanAndSolve"})", "application/json"),
          200, "settings");
    const auto ex = check(c.Get(base + "/export"), 200, "export");
    if (!ex.is_object() || ex["turns"].size() != 3 || ex["settings"]["expertise"] != "Beginner") {
      problems.push_back("export content");
    }
    const auto health = check(c.Get("/api/health"), 200, "health");
    if (health["backends"]["embedder"]["configured"] != false || health["backends"]["attributor"]["configured"] != false) {
      problems.push_back("optional backends reported as configured");
    }
  }
  server.stop();
  th.join();
  const double secs = seconds_since(t0);
  std::string detail = "create, 3 turns, settings, export in " + fmt(secs) + " s (< 5 s), no embedder or attributor";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty() && secs < 5.0, detail};
}

}  // namespace

int main() {
  const auto runtime = build_runtime(shipped_config());
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"dsl-round-trip", dsl_round_trip},
      {"grammar-soundness", grammar_soundness},
      {"mp-worked-example", [&] { return mp_worked_example(runtime); }},
      {"hallucination-filter", hallucination_filter},
      {"harness-calibration", harness_calibration},
      {"shipped-goldset", shipped_goldset},
      {"executor-identities", executor_identities},
      {"augmentation-calibration", augmentation_calibration},
      {"suggestion-dedup-fuzz", [&] { return suggestion_fuzz(runtime); }},
      {"api-smoke", api_smoke},
  };
  int failed = 0;
  for (const auto& [name, run] : checks) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (checks.size() - static_cast<std::size_t>(failed)) << "/" << checks.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
