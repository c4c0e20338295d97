#include "xaichat/eval.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <thread>

#include "xaichat/text.hpp"
#include "xaichat/validate.hpp"

namespace xaichat {

namespace {

constexpr const char* kNone = "<none>";

// Case and spacing never decide a match.
std::string canonical(std::string_view text, const Catalog& catalog) {
  return render_query(parse_query(text::join(text::split_whitespace(text::to_lower(text)), " "), catalog), catalog);
}

}  // namespace

std::size_t Goldset::covered_operations() const {
  return static_cast<std::size_t>(
      std::count_if(op_counts.begin(), op_counts.end(), [](const auto& kv) { return kv.second > 0; }));
}

Goldset parse_goldset(std::string_view jsonl, std::int64_t dataset_size, const Catalog& catalog) {
  Goldset out;
  for (const auto& op : catalog.main_operation_names()) out.op_counts[op] = 0;
  for (const auto* filter : {"filter", "includes"}) out.op_counts[filter] = 0;
  const ValidationContext vctx{dataset_size, {}, false};

  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto row = nlohmann::json::parse(line, nullptr, false);
    if (!row.is_object() || !row.contains("utterance") || !row.contains("parse") || !row["utterance"].is_string() ||
        !row["parse"].is_string()) {
      throw SchemaError(line_no, "expected {\"utterance\": string, \"parse\": string}");
    }
    GoldPair pair;
    pair.utterance = row["utterance"].get<std::string>();
    pair.line = line_no;
    QueryAst ast;
    try {
      pair.gold_parse = canonical(row["parse"].get<std::string>(), catalog);
      ast = parse_query(pair.gold_parse, catalog);
    } catch (const Error& e) {
      throw InvalidGoldParse(line_no, e.what());
    }
    const auto report = validate(ast, catalog, vctx);
    if (!report.ok()) throw InvalidGoldParse(line_no, report.summary());
    for (const auto& node : ast.operations) ++out.op_counts[node.op];
    for (const auto& f : ast.filters) ++out.op_counts[std::holds_alternative<ById>(f) ? "filter" : "includes"];
    out.pairs.push_back(std::move(pair));
  }
  if (out.pairs.empty()) throw SchemaError(0, "goldset is empty");
  for (const auto& [op, count] : out.op_counts) {
    if (count < Goldset::kMinPerOperation) {
      out.warnings.push_back("operation '" + op + "' appears " + std::to_string(count) + " times (want at least " +
                             std::to_string(Goldset::kMinPerOperation) + ")");
    }
  }
  return out;
}

Goldset build_goldset(const std::string& path, std::int64_t dataset_size, const Catalog& catalog) {
  return parse_goldset(text::read_file(path), dataset_size, catalog);
}

std::string main_operation(const QueryAst& ast) {
  if (!ast.operations.empty()) return ast.operations.back().op;
  if (!ast.filters.empty()) return std::holds_alternative<ById>(ast.filters.back()) ? "filter" : "includes";
  return kNone;
}

std::string EvalReport::accuracy_percent() const { return text::format_fixed(exact_match_accuracy * 100.0, 2); }

EvalReport eval_parsing(const Goldset& gold, Strategy strategy, const ParsingEngine& engine, const PromptStore& prompts,
                        const EvalOptions& options, const std::string& backend_id) {
  struct Outcome {
    std::string predicted;
    std::string predicted_op = kNone;
    std::string error;
  };
  ParseContext ctx;
  ctx.dataset_size = options.dataset_size;
  ctx.max_new_tokens = options.max_new_tokens;
  ctx.small_model = options.small_model;

  std::vector<Outcome> outcomes(gold.pairs.size());
  auto work = [&](std::size_t i) {
    Outcome& o = outcomes[i];
    try {
      const auto result = engine.parse(strategy, gold.pairs[i].utterance, prompts, ctx);
      o.predicted = render_query(result.ast);
      o.predicted_op = main_operation(result.ast);
    } catch (const Error& e) {
      o.error = std::string(to_string(e.code()));
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.parallelism, 1, std::max<std::size_t>(1, gold.pairs.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < gold.pairs.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < gold.pairs.size(); i = next++) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  EvalReport r;
  r.strategy = strategy;
  r.backend_id = backend_id;
  r.max_new_tokens = options.max_new_tokens;
  r.total = gold.pairs.size();
  for (std::size_t i = 0; i < gold.pairs.size(); ++i) {
    const auto& pair = gold.pairs[i];
    const auto& o = outcomes[i];
    const std::string gold_op = main_operation(parse_query(pair.gold_parse));
    ++r.confusion[gold_op][o.predicted_op];
    if (o.error.empty() && o.predicted == pair.gold_parse) {
      ++r.matches;
    } else {
      r.failures.push_back({i, pair.utterance, pair.gold_parse, o.predicted, o.error});
    }
  }
  r.exact_match_accuracy = r.total == 0 ? 0.0 : static_cast<double>(r.matches) / static_cast<double>(r.total);
  return r;
}

std::vector<EvalReport> eval_parsing_sweep(const Goldset& gold, Strategy strategy, const ParsingEngine& engine,
                                           const PromptStore& prompts, EvalOptions options,
                                           const std::string& backend_id) {
  std::vector<EvalReport> out;
  for (int tokens : sweep_max_new_tokens()) {
    options.max_new_tokens = tokens;
    out.push_back(eval_parsing(gold, strategy, engine, prompts, options, backend_id));
  }
  return out;
}

AugmentationReport eval_augmentation(std::shared_ptr<const Dataset> dataset, const Executor& executor,
                                     const PromptStore& prompts, SimilarityService& similarity, std::size_t n,
                                     std::uint64_t seed) {
  const auto size = static_cast<std::size_t>(dataset->size());
  if (n == 0 || n > size) {
    throw Error(ErrorCode::RangeError, "augmentation sample needs 1 <= n <= " + std::to_string(size));
  }
  DataStore store(dataset);
  PredictionCache cache;
  std::mt19937_64 rng(seed);
  ExecutionContext ctx;
  ctx.store = &store;
  ctx.cache = &cache;
  ctx.prompts = &prompts;
  ctx.rng = &rng;

  std::vector<std::size_t> ids(size);
  for (std::size_t i = 0; i < size; ++i) ids[i] = i;
  for (std::size_t i = 0; i < n; ++i) std::swap(ids[i], ids[i + static_cast<std::size_t>(rng() % (size - i))]);
  ids.resize(n);
  std::sort(ids.begin(), ids.end());

  AugmentationReport r;
  r.n = n;
  std::size_t consistent = 0;
  double similarity_sum = 0;
  std::vector<BackendCall> calls;
  for (auto idx : ids) {
    const Instance& inst = dataset->instances[idx];
    AugmentationItem item;
    item.id = inst.id;
    item.original = inst.primary_text();
    item.augmented = executor.paraphrase(inst, 0, ctx, calls);
    item.original_label = executor.classify(inst, ctx, calls);
    item.augmented_label = executor.classify(with_primary(inst, item.augmented), ctx, calls);
    item.similarity = std::clamp(similarity.similarity(item.original, item.augmented), 0.0, 1.0);
    if (item.original_label >= 0 && item.original_label == item.augmented_label) ++consistent;
    similarity_sum += item.similarity;
    r.items.push_back(std::move(item));
  }
  r.consistency = static_cast<double>(consistent) / static_cast<double>(n);
  r.fluency = similarity_sum / static_cast<double>(n);
  return r;
}

nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["strategy"] = to_string(r.strategy);
  j["backend_id"] = r.backend_id;
  j["max_new_tokens"] = r.max_new_tokens;
  j["total"] = r.total;
  j["matches"] = r.matches;
  j["exact_match_accuracy"] = r.exact_match_accuracy;
  j["accuracy_percent"] = r.accuracy_percent();
  j["confusion"] = nlohmann::ordered_json::object();
  for (const auto& [gold, row] : r.confusion) {
    for (const auto& [pred, count] : row) j["confusion"][gold][pred] = count;
  }
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : r.failures) {
    j["failures"].push_back({{"index", f.index},
                             {"utterance", f.utterance},
                             {"gold", f.gold},
                             {"predicted", f.predicted},
                             {"error", f.error}});
  }
  return j;
}

nlohmann::ordered_json report_json(const std::vector<EvalReport>& rs) {
  nlohmann::ordered_json j;
  j["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : rs) j["reports"].push_back(report_json(r));
  return j;
}

nlohmann::ordered_json report_json(const AugmentationReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["consistency"] = r.consistency;
  j["fluency"] = r.fluency;
  j["items"] = nlohmann::ordered_json::array();
  for (const auto& it : r.items) {
    j["items"].push_back({{"id", it.id},
                          {"original", it.original},
                          {"augmented", it.augmented},
                          {"original_label", it.original_label},
                          {"augmented_label", it.augmented_label},
                          {"similarity", it.similarity}});
  }
  return j;
}

namespace {

void check_format(const std::string& format) {
  if (format != "text" && format != "json") {
    throw Error(ErrorCode::InvalidArgument, "report format must be text or json, got '" + format + "'");
  }
}

}  // namespace

std::string render_report(const std::vector<EvalReport>& rs, const std::string& format) {
  check_format(format);
  if (format == "json") return report_json(rs).dump(2) + "\n";
  std::ostringstream out;
  for (const auto& r : rs) {
    out << "strategy=" << to_string(r.strategy) << " backend=" << r.backend_id
        << " max_new_tokens=" << r.max_new_tokens << "\n";
    out << "exact match: " << r.accuracy_percent() << "% (" << r.matches << "/" << r.total << ")\n";
    out << "per operation (gold: correct op / total):\n";
    for (const auto& [gold, row] : r.confusion) {
      std::size_t total = 0;
      for (const auto& [_, c] : row) total += c;
      const auto hit = row.find(gold);
      out << "  " << gold << ": " << (hit == row.end() ? 0 : hit->second) << "/" << total << "\n";
    }
    if (!r.failures.empty()) {
      out << "failures:\n";
      for (const auto& f : r.failures) {
        out << "  [" << f.index << "] " << f.utterance << "\n      gold: " << f.gold
            << "\n      got:  " << (f.predicted.empty() ? "(" + f.error + ")" : f.predicted) << "\n";
      }
    }
  }
  return out.str();
}

std::string render_report(const AugmentationReport& r, const std::string& format) {
  check_format(format);
  if (format == "json") return report_json(r).dump(2) + "\n";
  std::ostringstream out;
  out << "n=" << r.n << "\n";
  out << "consistency: " << text::format_fixed(r.consistency, 4) << "\n";
  out << "fluency: " << text::format_fixed(r.fluency, 4) << "\n";
  return out.str();
}

}  // namespace xaichat
