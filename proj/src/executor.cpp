#include "xaichat/executor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "xaichat/errors.hpp"
#include "xaichat/text.hpp"

namespace xaichat {

namespace fs = std::filesystem;

std::string_view to_string(CotStrategy s) {
  switch (s) {
    case CotStrategy::ZeroCot: return "ZeroCot";
    case CotStrategy::PlanAndSolve: return "PlanAndSolve";
    case CotStrategy::Opro: return "Opro";
  }
  return "ZeroCot";
}

std::string_view to_string(ExpertiseLevel l) {
  switch (l) {
    case ExpertiseLevel::Beginner: return "Beginner";
    case ExpertiseLevel::Intermediate: return "Intermediate";
    case ExpertiseLevel::Expert: return "Expert";
  }
  return "Intermediate";
}

namespace {

std::string squash(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c != '_' && c != '-' && c != ' ') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

CotStrategy cot_strategy_from_string(std::string_view s) {
  const auto key = squash(s);
  if (key == "zerocot") return CotStrategy::ZeroCot;
  if (key == "planandsolve") return CotStrategy::PlanAndSolve;
  if (key == "opro") return CotStrategy::Opro;
  throw Error(ErrorCode::InvalidArgument, "unknown CoT strategy '" + std::string(s) + "'");
}

ExpertiseLevel expertise_from_string(std::string_view s) {
  const auto key = squash(s);
  if (key == "beginner") return ExpertiseLevel::Beginner;
  if (key == "intermediate") return ExpertiseLevel::Intermediate;
  if (key == "expert") return ExpertiseLevel::Expert;
  throw Error(ErrorCode::InvalidArgument, "unknown expertise level '" + std::string(s) + "'");
}

std::string cot_template_name(CotStrategy s) {
  switch (s) {
    case CotStrategy::ZeroCot: return "rationalize_zero_cot";
    case CotStrategy::PlanAndSolve: return "rationalize_plan_and_solve";
    case CotStrategy::Opro: return "rationalize_opro";
  }
  return "rationalize_zero_cot";
}

// ---------------------------------------------------------------------------
// ResponseTemplates
// ---------------------------------------------------------------------------

const std::vector<std::string>& ResponseTemplates::required_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k = default_catalog().operation_names();
    k.erase(std::remove_if(k.begin(), k.end(), [](const std::string& n) { return n == "filter" || n == "includes"; }),
            k.end());
    for (const char* extra : {"predict_unknown", "mistakes_show", "nlpattribute_unavailable", "augment_copy",
                              "empty_scope", "more_instances", "clarification", "decline_ack", "suggestion"}) {
      k.emplace_back(extra);
    }
    return k;
  }();
  return keys;
}

ResponseTemplates::ResponseTemplates(std::map<std::string, std::vector<std::string>> variants)
    : variants_(std::move(variants)) {}

ResponseTemplates ResponseTemplates::load(const std::string& dir, const Catalog& /*catalog*/) {
  std::map<std::string, std::vector<std::string>> variants;
  if (!fs::is_directory(dir)) throw SchemaError(0, "template directory not found: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    const std::string content = text::read_file(entry.path().string());
    std::vector<std::string> parts;
    std::string current;
    std::istringstream in(content);
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line) == "---") {
        parts.push_back(text::trim(current));
        current.clear();
      } else {
        if (!current.empty()) current += "\n";
        current += line;
      }
    }
    parts.push_back(text::trim(current));
    for (const auto& p : parts) {
      if (p.empty()) throw SchemaError(0, entry.path().filename().string() + ": empty variant");
    }
    variants[entry.path().stem().string()] = std::move(parts);
  }
  for (const auto& key : required_keys()) {
    if (variants.find(key) == variants.end()) throw SchemaError(0, "missing response template " + key + ".txt");
  }
  return ResponseTemplates(std::move(variants));
}

const std::vector<std::string>& ResponseTemplates::variants(const std::string& key) const {
  auto it = variants_.find(key);
  if (it == variants_.end()) throw Error(ErrorCode::NotFound, "no response template '" + key + "'");
  return it->second;
}

std::string ResponseTemplates::render(const std::string& key, const std::map<std::string, std::string>& values,
                                      std::mt19937_64& rng) const {
  const auto& v = variants(key);
  const auto& chosen = v[static_cast<std::size_t>(rng() % v.size())];
  return text::fill_placeholders(chosen, values);
}

// ---------------------------------------------------------------------------
// Payload serialization
// ---------------------------------------------------------------------------

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

nlohmann::ordered_json prediction_json(const Prediction& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["label"] = p.label_name;
  j["raw"] = p.raw;
  j["cached"] = p.from_cache;
  return j;
}

nlohmann::ordered_json counts_json(const std::vector<std::pair<std::string, std::int64_t>>& counts) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : counts) j[k] = v;
  return j;
}

}  // namespace

std::string_view payload_kind(const Payload& p) {
  return std::visit(overloaded{
                        [](const Prediction&) { return std::string_view("prediction"); },
                        [](const PredictionList&) { return std::string_view("prediction_list"); },
                        [](const ScoreReport&) { return std::string_view("score"); },
                        [](const MistakeReport&) { return std::string_view("mistakes"); },
                        [](const AttributionReport&) { return std::string_view("attribution"); },
                        [](const TextOutput&) { return std::string_view("text"); },
                        [](const InstanceList&) { return std::string_view("instances"); },
                        [](const Distribution&) { return std::string_view("distribution"); },
                        [](const MetaText&) { return std::string_view("meta"); },
                        [](const CountValue&) { return std::string_view("count"); },
                    },
                    p);
}

nlohmann::ordered_json payload_json(const Payload& p) {
  nlohmann::ordered_json j;
  j["kind"] = payload_kind(p);
  std::visit(overloaded{
                 [&](const Prediction& v) { j["prediction"] = prediction_json(v); },
                 [&](const PredictionList& v) {
                   j["predictions"] = nlohmann::ordered_json::array();
                   for (const auto& p2 : v.predictions) j["predictions"].push_back(prediction_json(p2));
                 },
                 [&](const ScoreReport& v) {
                   j["metric"] = v.metric;
                   j["value"] = v.value;
                   j["n"] = v.n;
                   j["support"] = counts_json(v.support);
                 },
                 [&](const MistakeReport& v) {
                   j["mode"] = v.mode;
                   j["count"] = v.count;
                   j["total"] = v.total;
                   j["mistakes"] = nlohmann::ordered_json::array();
                   for (const auto& m : v.mistakes) {
                     j["mistakes"].push_back({{"id", m.id}, {"gold", m.gold}, {"predicted", m.predicted}});
                   }
                 },
                 [&](const AttributionReport& v) {
                   j["id"] = v.id;
                   j["available"] = v.available;
                   j["method"] = v.result.method;
                   j["tokens"] = v.result.tokens;
                   j["scores"] = v.result.scores;
                   j["top"] = v.top;
                 },
                 [&](const TextOutput& v) {
                   j["text_kind"] = v.kind;
                   j["id"] = v.id ? nlohmann::ordered_json(*v.id) : nlohmann::ordered_json();
                   j["text"] = v.text;
                   j["candidate"] = v.candidate ? *v.candidate : nlohmann::ordered_json();
                   j["flip_confirmed"] = v.flip_confirmed ? nlohmann::ordered_json(*v.flip_confirmed)
                                                          : nlohmann::ordered_json();
                 },
                 [&](const InstanceList& v) {
                   j["ids"] = v.ids;
                   j["scores"] = v.scores;
                 },
                 [&](const Distribution& v) { j["counts"] = counts_json(v.counts); },
                 [&](const MetaText& v) { j["text"] = v.text; },
                 [&](const CountValue& v) { j["count"] = v.count; },
             },
             p);
  return j;
}

// ---------------------------------------------------------------------------
// Label mapping and metrics
// ---------------------------------------------------------------------------

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Earliest position of `needle` in `hay` (both lowercase); standalone-word match when `whole`.
std::optional<std::size_t> find_label(const std::string& hay, const std::string& needle, bool whole) {
  if (needle.empty()) return std::nullopt;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
    if (!whole) return pos;
    const bool left = pos == 0 || !is_word_char(hay[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right = end == hay.size() || !is_word_char(hay[end]);
    if (left && right) return pos;
  }
  return std::nullopt;
}

}  // namespace

std::optional<int> map_label(std::string_view generation, const Dataset& ds, const Instance& inst) {
  const std::string hay = text::to_lower(generation);
  struct Candidate {
    std::string text;
    int label;
    bool whole;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < ds.label_names.size(); ++i) {
    const auto name = text::to_lower(ds.label_names[i]);
    candidates.push_back({name, static_cast<int>(i), name.size() == 1});
  }
  if (ds.task == Task::CommonsenseQA) {
    for (std::size_t i = 0; i < inst.choices.size() && i < ds.label_names.size(); ++i) {
      candidates.push_back({text::to_lower(inst.choices[i]), static_cast<int>(i), true});
    }
  }
  std::optional<int> best;
  std::size_t best_len = 0;
  std::size_t best_pos = 0;
  for (const auto& c : candidates) {
    const auto pos = find_label(hay, c.text, c.whole);
    if (!pos) continue;
    if (!best || c.text.size() > best_len || (c.text.size() == best_len && *pos < best_pos)) {
      best = c.label;
      best_len = c.text.size();
      best_pos = *pos;
    }
  }
  return best;
}

double macro_metric(const std::string& metric, const std::vector<int>& gold, const std::vector<int>& predicted) {
  if (gold.size() != predicted.size()) throw Error(ErrorCode::InvalidArgument, "gold/predicted length mismatch");
  if (gold.empty()) throw Error(ErrorCode::EmptySubset, "no labeled instances to score");
  if (metric == "accuracy") {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == predicted[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(gold.size());
  }
  if (metric != "f1" && metric != "precision" && metric != "recall") {
    throw Error(ErrorCode::InvalidArgument, "unknown metric '" + metric + "'");
  }
  std::set<int> labels(gold.begin(), gold.end());
  for (int p : predicted) {
    if (p >= 0) labels.insert(p);
  }
  double sum = 0;
  for (int label : labels) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool g = gold[i] == label;
      const bool p = predicted[i] == label;
      tp += g && p ? 1 : 0;
      fp += !g && p ? 1 : 0;
      fn += g && !p ? 1 : 0;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    if (metric == "precision") {
      sum += precision;
    } else if (metric == "recall") {
      sum += recall;
    } else {
      sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    }
  }
  return sum / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Executor
// ---------------------------------------------------------------------------

namespace {

std::string clip(std::string_view s, std::size_t n) {
  std::string flat;
  for (char c : s) flat.push_back(c == '\n' ? ' ' : c);
  if (flat.size() <= n) return flat;
  return flat.substr(0, n) + "...";
}

std::string normalized(std::string_view s) { return text::join(text::split_whitespace(text::to_lower(s)), " "); }

std::string first_line(std::string_view s) {
  const std::string t = text::trim(s);
  return t.substr(0, t.find('\n'));
}

std::string attr_string(const OpNode& node, std::size_t i) {
  return i < node.attrs.size() ? attr_value_string(node.attrs[i]) : std::string();
}

std::int64_t attr_int(const OpNode& node, std::size_t i, std::int64_t fallback) {
  if (i < node.attrs.size()) {
    if (const auto* v = std::get_if<std::int64_t>(&node.attrs[i])) return *v;
  }
  return fallback;
}

std::string counts_text(const std::vector<std::pair<std::string, std::int64_t>>& counts) {
  std::vector<std::string> parts;
  for (const auto& [k, v] : counts) parts.push_back(k + ": " + std::to_string(v));
  return parts.empty() ? std::string("none") : text::join(parts, ", ");
}


nlohmann::ordered_json candidate_fields(const Instance& inst) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : inst.fields) j[k] = v;
  if (!inst.choices.empty()) j["choices"] = inst.choices;
  return j;
}

}  // namespace

// Instance with its primary text replaced; used for perturbation candidates.
Instance with_primary(const Instance& inst, const std::string& replacement) {
  Instance copy = inst;
  if (!copy.fields.empty()) copy.fields.front().second = replacement;
  copy.gold_label.reset();
  copy.source = Source::CustomInput;
  return copy;
}

Executor::Executor(ExecutorBackends backends, ResponseTemplates templates, Metadata metadata, const Catalog& catalog)
    : backends_(std::move(backends)), templates_(std::move(templates)), metadata_(std::move(metadata)), catalog_(catalog) {
  if (!backends_.generator) throw Error(ErrorCode::InvalidArgument, "executor needs a generation backend");
  if (!backends_.similarity) backends_.similarity = std::make_shared<SimilarityService>();
}

std::string Executor::render(const std::string& key, const std::map<std::string, std::string>& values,
                             ExecutionContext& ctx) const {
  return templates_.render(key, values, *ctx.rng);
}

std::string Executor::generate(const std::string& prompt, int max_tokens, std::uint64_t seed,
                               std::vector<BackendCall>& calls) const {
  GenerationRequest req;
  req.prompt = prompt;
  req.max_new_tokens = max_tokens;
  req.stop_sequences = {"\n\n"};
  req.temperature = 0.0;
  req.seed = seed;
  const auto resp = backends_.generator->generate(req);
  calls.push_back({"generate", resp.backend_id, prompt, resp.text});
  return text::trim(resp.text);
}

std::string Executor::preamble(ExpertiseLevel level, const ExecutionContext& ctx) const {
  const std::string name = "preamble_" + text::to_lower(to_string(level));
  return ctx.prompts->get_template(name);
}

std::string Executor::predict_prompt(const Instance& inst, const ExecutionContext& ctx) const {
  const auto& ds = ctx.store->dataset();
  return text::fill_placeholders(ctx.prompts->get_template("predict_" + std::string(to_string(ds.task))),
                                 {{"instance", instance_prompt_text(ds, inst)}, {"preamble", ""}});
}

std::string Executor::rationalize_prompt(const Instance& inst, const std::string& prediction,
                                         const ExecutionContext& ctx) const {
  const auto& ds = ctx.store->dataset();
  return text::fill_placeholders(ctx.prompts->get_template(cot_template_name(ctx.cot)),
                                 {{"preamble", preamble(ctx.expertise, ctx)},
                                  {"instance", instance_prompt_text(ds, inst)},
                                  {"prediction", prediction}});
}

Prediction Executor::predict(const Instance& inst, ExecutionContext& ctx, std::vector<BackendCall>& calls) const {
  const auto& ds = ctx.store->dataset();
  Prediction out;
  out.id = inst.id;
  if (auto hit = ctx.cache->get(inst.id)) {
    out.label = hit->label;
    out.raw = hit->raw;
    out.from_cache = true;
  } else {
    const std::string raw = generate(predict_prompt(inst, ctx), kPredictTokens, 0, calls);
    CachedPrediction entry;
    entry.label = map_label(raw, ds, inst).value_or(-1);
    entry.raw = raw;
    entry.at = std::chrono::system_clock::now();
    const auto stored = ctx.cache->insert_or_get(inst.id, entry);
    out.label = stored.label;
    out.raw = stored.raw;
  }
  out.label_name = out.label >= 0 ? ds.label_name(out.label) : std::string("unknown");
  return out;
}

std::vector<Prediction> Executor::randompredict(std::int64_t n, ExecutionContext& ctx,
                                                std::vector<BackendCall>& calls) const {
  const auto size = ctx.store->dataset_size();
  if (n < 1 || n > size) {
    throw Error(ErrorCode::RangeError, "randompredict needs 1 <= n <= " + std::to_string(size));
  }
  std::vector<std::int64_t> ids(static_cast<std::size_t>(size));
  for (std::int64_t i = 0; i < size; ++i) ids[static_cast<std::size_t>(i)] = i;
  // Partial Fisher-Yates with raw engine output, so samples match across standard libraries.
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    const std::size_t j = i + static_cast<std::size_t>((*ctx.rng)() % (ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(n));
  std::sort(ids.begin(), ids.end());
  std::vector<Prediction> out;
  for (auto id : ids) out.push_back(predict(ctx.store->get(id), ctx, calls));
  return out;
}

MistakeReport Executor::mistakes(const std::vector<const Instance*>& subset, const std::string& mode,
                                 ExecutionContext& ctx, std::vector<BackendCall>& calls) const {
  const auto& ds = ctx.store->dataset();
  MistakeReport report;
  report.mode = mode;
  for (const auto* inst : subset) {
    if (!inst->gold_label) continue;
    ++report.total;
    const auto p = predict(*inst, ctx, calls);
    if (p.label != *inst->gold_label) report.mistakes.push_back({inst->id, ds.label_name(inst->gold_label), p.label_name});
  }
  report.count = static_cast<std::int64_t>(report.mistakes.size());
  return report;
}

ScoreReport Executor::score(const std::vector<const Instance*>& subset, const std::string& metric,
                            ExecutionContext& ctx, std::vector<BackendCall>& calls) const {
  const auto& ds = ctx.store->dataset();
  std::vector<int> gold, predicted;
  std::vector<const Instance*> labeled;
  for (const auto* inst : subset) {
    if (!inst->gold_label) continue;
    labeled.push_back(inst);
    gold.push_back(*inst->gold_label);
    predicted.push_back(predict(*inst, ctx, calls).label);
  }
  if (labeled.empty()) throw Error(ErrorCode::EmptySubset, "no labeled instances in scope");
  ScoreReport report;
  report.metric = metric;
  report.value = macro_metric(metric, gold, predicted);
  report.n = static_cast<std::int64_t>(labeled.size());
  for (const auto& [name, count] : label_distribution(ds, labeled)) report.support.emplace_back(name, count);
  return report;
}

AttributionReport Executor::nlpattribute(const Instance& inst, std::int64_t topk, const std::string& method,
                                         ExecutionContext& ctx, std::vector<BackendCall>& calls) const {
  AttributionReport report;
  report.id = inst.id;
  if (!backends_.attributor) throw Error(ErrorCode::AttributionUnavailable, "no attribution backend configured");
  const auto prediction = predict(inst, ctx, calls);
  try {
    report.result = backends_.attributor->attribute(inst.primary_text(), prediction.label_name, method);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BackendUnavailable || e.code() == ErrorCode::Timeout) {
      throw Error(ErrorCode::AttributionUnavailable, e.what());
    }
    throw;
  }
  calls.push_back({"attribute", backends_.attributor->backend_id(), inst.primary_text(), method});
  report.result.instance_id = inst.id;
  std::vector<std::size_t> order(report.result.tokens.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto& scores = report.result.scores;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::fabs(scores[a]) > std::fabs(scores[b]); });
  const auto limit = topk <= 0 ? order.size() : std::min(order.size(), static_cast<std::size_t>(topk));
  order.resize(limit);
  report.top = std::move(order);
  return report;
}

TextOutput Executor::rationalize(const Instance& inst, ExecutionContext& ctx, std::vector<BackendCall>& calls) const {
  const auto prediction = predict(inst, ctx, calls);
  TextOutput out;
  out.kind = "rationale";
  out.id = inst.id;
  out.text = generate(rationalize_prompt(inst, prediction.label_name, ctx), kTextTokens, 0, calls);
  return out;
}

std::string Executor::paraphrase(const Instance& inst, std::uint64_t seed, ExecutionContext& ctx,
                                 std::vector<BackendCall>& calls) const {
  const auto& ds = ctx.store->dataset();
  const std::string prompt =
      text::fill_placeholders(ctx.prompts->get_template("augment_" + std::string(to_string(ds.task))),
                              {{"instance", instance_prompt_text(ds, inst)}, {"preamble", ""}});
  return first_line(generate(prompt, kTextTokens, seed, calls));
}

int Executor::classify(const Instance& inst, ExecutionContext& ctx, std::vector<BackendCall>& calls) const {
  const std::string raw = generate(predict_prompt(inst, ctx), kPredictTokens, 0, calls);
  return map_label(raw, ctx.store->dataset(), inst).value_or(-1);
}

TextOutput Executor::augment(const Instance& inst, ExecutionContext& ctx, std::vector<BackendCall>& calls) const {
  TextOutput out;
  out.kind = "augment";
  out.id = inst.id;
  const std::string original = normalized(inst.primary_text());
  for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
    const std::string candidate = paraphrase(inst, attempt, ctx, calls);
    if (!candidate.empty() && normalized(candidate) != original) {
      out.text = candidate;
      out.candidate = candidate_fields(with_primary(inst, candidate));
      return out;
    }
  }
  return out;  // both attempts copied the input: no candidate
}

TextOutput Executor::cfe(const Instance& inst, ExecutionContext& ctx, std::vector<BackendCall>& calls) const {
  const auto& ds = ctx.store->dataset();
  const auto prediction = predict(inst, ctx, calls);
  const std::string prompt =
      text::fill_placeholders(ctx.prompts->get_template("cfe_" + std::string(to_string(ds.task))),
                              {{"instance", instance_prompt_text(ds, inst)},
                               {"prediction", prediction.label_name},
                               {"preamble", ""}});
  TextOutput out;
  out.kind = "cfe";
  out.id = inst.id;
  out.text = first_line(generate(prompt, kTextTokens, 0, calls));
  const Instance edited = with_primary(inst, out.text);
  out.candidate = candidate_fields(edited);
  if (ctx.verify_cfe) {
    const std::string raw = generate(predict_prompt(edited, ctx), kPredictTokens, 0, calls);
    const auto label = map_label(raw, ds, edited);
    out.flip_confirmed = prediction.label >= 0 && label.has_value() && *label != prediction.label;
  }
  return out;
}

TextOutput Executor::qatutorial(const std::string& op_name, std::optional<ExpertiseLevel> level,
                                ExecutionContext& ctx, std::vector<BackendCall>& calls) const {
  const auto* spec = catalog_.find(op_name);
  if (spec == nullptr || spec->is_logic()) {
    throw Error(ErrorCode::UnknownOperation, "unknown operation '" + op_name + "'");
  }
  const ExpertiseLevel lvl = level.value_or(ctx.expertise);
  const std::string prompt = text::fill_placeholders(
      ctx.prompts->get_template("qatutorial"),
      {{"preamble", preamble(lvl, ctx)}, {"topic", spec->topic}, {"description", spec->description},
       {"level", text::to_lower(to_string(lvl))}, {"operation", spec->name}});
  TextOutput out;
  out.kind = "tutorial";
  out.text = generate(prompt, kTextTokens, 0, calls);
  return out;
}

OperationResult Executor::run_on_instance(const OpNode& node, const Instance& inst, ExecutionContext& ctx,
                                          std::vector<BackendCall>& calls) const {
  const auto& ds = ctx.store->dataset();
  const std::string id = std::to_string(inst.id);
  OperationResult r;
  r.op = node.op;
  if (node.op == "predict") {
    auto p = predict(inst, ctx, calls);
    r.response_text = p.label >= 0 ? render("predict", {{"id", id}, {"label", p.label_name}}, ctx)
                                   : render("predict_unknown", {{"id", id}, {"raw", p.raw}}, ctx);
    r.payload = std::move(p);
  } else if (node.op == "nlpattribute") {
    const auto topk = attr_int(node, 0, kAllTokens);
    const auto method = attr_string(node, 1);
    try {
      auto report = nlpattribute(inst, topk, method, ctx, calls);
      std::string ranking;
      for (std::size_t rank = 0; rank < report.top.size(); ++rank) {
        const auto i = report.top[rank];
        ranking += std::to_string(rank + 1) + ". " + report.result.tokens[i] + " (" +
                   text::format_fixed(report.result.scores[i], 3) + ")\n";
      }
      double max_abs = 0;
      for (double s : report.result.scores) max_abs = std::max(max_abs, std::fabs(s));
      std::vector<std::string> heat;
      for (std::size_t i = 0; i < report.result.tokens.size(); ++i) {
        const int level = max_abs > 0 ? static_cast<int>(std::lround(4 * std::fabs(report.result.scores[i]) / max_abs)) : 0;
        heat.push_back(report.result.tokens[i] + "[" + std::string(static_cast<std::size_t>(level), '#') + "]");
      }
      r.response_text = render("nlpattribute",
                               {{"id", id},
                                {"method", method},
                                {"k", std::to_string(report.top.size())},
                                {"details", ranking + "Heatmap: " + text::join(heat, " ")}},
                               ctx);
      r.payload = std::move(report);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AttributionUnavailable) throw;
      AttributionReport report;
      report.id = inst.id;
      report.available = false;
      report.result.method = method;
      r.response_text = render("nlpattribute_unavailable", {{"id", id}, {"method", method}}, ctx);
      r.payload = std::move(report);
    }
  } else if (node.op == "rationalize") {
    auto out = rationalize(inst, ctx, calls);
    r.response_text = render("rationalize", {{"id", id}, {"label", predict(inst, ctx, calls).label_name},
                                             {"rationale", out.text}}, ctx);
    r.payload = std::move(out);
  } else if (node.op == "similarity") {
    const auto k = static_cast<std::size_t>(std::max<std::int64_t>(1, attr_int(node, 0, 3)));
    const auto hits = similar_topk(*ctx.store, inst, k, *backends_.similarity);
    InstanceList list;
    std::string details;
    for (const auto& [hit, score] : hits) {
      list.ids.push_back(hit->id);
      list.scores.push_back(score);
      details += "[" + std::to_string(hit->id) + "] (" + text::format_fixed(score, 2) + ") " +
                 clip(hit->primary_text(), 160) + "\n";
    }
    r.response_text = render("similarity", {{"id", id}, {"k", std::to_string(hits.size())},
                                            {"details", text::trim(details)}}, ctx);
    r.payload = std::move(list);
  } else if (node.op == "cfe") {
    auto out = cfe(inst, ctx, calls);
    std::string verdict = "not checked";
    if (out.flip_confirmed) verdict = *out.flip_confirmed ? "flip confirmed" : "candidate counterfactual (unverified flip)";
    r.response_text = render("cfe", {{"id", id}, {"original", inst.primary_text()}, {"edited", out.text},
                                     {"label", predict(inst, ctx, calls).label_name}, {"verdict", verdict}}, ctx);
    r.payload = std::move(out);
  } else if (node.op == "augment") {
    auto out = augment(inst, ctx, calls);
    r.response_text = out.candidate ? render("augment", {{"id", id}, {"original", inst.primary_text()},
                                                         {"augmented", out.text}}, ctx)
                                    : render("augment_copy", {{"id", id}}, ctx);
    r.payload = std::move(out);
  } else {
    throw Error(ErrorCode::InvalidArgument, "'" + node.op + "' is not an instance operation");
  }
  (void)ds;
  return r;
}

std::vector<OperationResult> Executor::run(const OpNode& node, const std::vector<const Instance*>& scope,
                                           bool filtered, ExecutionContext& ctx,
                                           std::vector<BackendCall>& calls) const {
  const auto& spec = catalog_.lookup(node.op);
  const auto& ds = ctx.store->dataset();
  if (spec.instance_scoped()) {
    std::vector<const Instance*> targets = scope;
    if (!filtered) {
      if (!ctx.focus_id) throw Error(ErrorCode::EmptySubset, "'" + node.op + "' needs an instance in scope");
      targets = {&ctx.store->get(*ctx.focus_id)};
    }
    if (targets.empty()) {
      return {{node.op, MetaText{""}, render("empty_scope", {{"op", node.op}}, ctx)}};
    }
    std::vector<OperationResult> out;
    const std::size_t shown = std::min(targets.size(), kShowPageSize);
    for (std::size_t i = 0; i < shown; ++i) out.push_back(run_on_instance(node, *targets[i], ctx, calls));
    if (targets.size() > shown) {
      out.back().response_text +=
          "\n" + render("more_instances", {{"n", std::to_string(targets.size() - shown)}, {"op", node.op}}, ctx);
    }
    return out;
  }

  std::vector<const Instance*> subset = filtered ? scope : ctx.store->all();
  OperationResult r;
  r.op = node.op;
  if (node.op == "randompredict") {
    PredictionList list{randompredict(attr_int(node, 0, 1), ctx, calls)};
    std::vector<std::pair<std::string, std::int64_t>> counts;
    for (const auto& p : list.predictions) {
      auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.first == p.label_name; });
      if (it == counts.end()) {
        counts.emplace_back(p.label_name, 1);
      } else {
        ++it->second;
      }
    }
    r.response_text = render("randompredict", {{"n", std::to_string(list.predictions.size())},
                                               {"labels", counts_text(counts)}}, ctx);
    r.payload = std::move(list);
  } else if (node.op == "mistakes") {
    const auto mode = attr_string(node, 0);
    auto report = mistakes(subset, mode, ctx, calls);
    if (mode == "show") {
      std::string details;
      const std::size_t shown = std::min(report.mistakes.size(), kShowPageSize);
      for (std::size_t i = 0; i < shown; ++i) {
        const auto& m = report.mistakes[i];
        details += "[" + std::to_string(m.id) + "] gold: " + m.gold + ", predicted: " + m.predicted + " | " +
                   clip(ctx.store->get(m.id).primary_text(), 160) + "\n";
      }
      if (report.mistakes.size() > shown) {
        details += "... " + std::to_string(report.mistakes.size() - shown) + " more instance(s) not shown\n";
      }
      r.response_text = render("mistakes_show", {{"count", std::to_string(report.count)},
                                                 {"total", std::to_string(report.total)},
                                                 {"details", text::trim(details)}}, ctx);
    } else {
      r.response_text = render("mistakes", {{"count", std::to_string(report.count)},
                                            {"total", std::to_string(report.total)}}, ctx);
    }
    r.payload = std::move(report);
  } else if (node.op == "score") {
    const auto metric = attr_string(node, 0);
    try {
      auto report = score(subset, metric, ctx, calls);
      r.response_text = render("score", {{"metric", metric}, {"value", text::format_fixed(report.value, 2)},
                                         {"n", std::to_string(report.n)}}, ctx);
      r.payload = std::move(report);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptySubset) throw;
      r.response_text = render("empty_scope", {{"op", node.op}}, ctx);
      r.payload = MetaText{""};
    }
  } else if (node.op == "show") {
    InstanceList list;
    for (const auto* inst : subset) list.ids.push_back(inst->id);
    r.response_text = subset.empty() ? render("empty_scope", {{"op", node.op}}, ctx)
                                     : render("show", {{"details", xaichat::show(ds, subset, 0)},
                                                       {"n", std::to_string(subset.size())}}, ctx);
    r.payload = std::move(list);
  } else if (node.op == "countdata") {
    const auto n = countdata(subset);
    r.response_text = render("countdata", {{"count", std::to_string(n)}}, ctx);
    r.payload = CountValue{n};
  } else if (node.op == "label") {
    Distribution d{label_distribution(ds, subset)};
    r.response_text = render("label", {{"details", counts_text(d.counts)}, {"n", std::to_string(subset.size())}}, ctx);
    r.payload = std::move(d);
  } else if (node.op == "keywords") {
    Distribution d{keywords(subset, kKeywordCount)};
    std::vector<std::string> parts;
    for (const auto& [k, v] : d.counts) parts.push_back(k + " (" + std::to_string(v) + ")");
    r.response_text = d.counts.empty() ? render("empty_scope", {{"op", node.op}}, ctx)
                                       : render("keywords", {{"details", text::join(parts, ", ")}}, ctx);
    r.payload = std::move(d);
  } else if (node.op == "data") {
    std::string labels = text::join(ds.label_names, ", ");
    r.response_text = render("data", {{"name", ds.name}, {"size", std::to_string(ds.size())},
                                      {"task", std::string(to_string(ds.task))}, {"labels", labels},
                                      {"description", ds.description}}, ctx);
    r.payload = MetaText{ds.description};
  } else if (node.op == "model") {
    r.response_text = render("model", {{"model_card", metadata_.model_card},
                                       {"backend", backends_.generator->backend_id()}}, ctx);
    r.payload = MetaText{metadata_.model_card};
  } else if (node.op == "websearch") {
    r.response_text = render("websearch", {{"notice", metadata_.websearch_notice}}, ctx);
    r.payload = MetaText{metadata_.websearch_notice};
  } else if (node.op == "function") {
    r.response_text = render("function", {{"description", metadata_.function_description}}, ctx);
    r.payload = MetaText{metadata_.function_description};
  } else if (node.op == "self") {
    r.response_text = render("self", {{"description", metadata_.self_description}}, ctx);
    r.payload = MetaText{metadata_.self_description};
  } else if (node.op == "qatutorial") {
    const auto op_name = attr_string(node, 0);
    const auto level_str = attr_string(node, 1);
    std::optional<ExpertiseLevel> level;
    if (!level_str.empty() && level_str != kSessionLevel) level = expertise_from_string(level_str);
    auto out = qatutorial(op_name, level, ctx, calls);
    r.response_text = render("qatutorial", {{"operation", op_name}, {"explanation", out.text}}, ctx);
    r.payload = std::move(out);
  } else {
    throw Error(ErrorCode::UnknownOperation, "no executor for '" + node.op + "'");
  }
  return {std::move(r)};
}

ExecutionResult Executor::execute(const QueryAst& ast, ExecutionContext& ctx) const {
  if (ctx.store == nullptr || ctx.cache == nullptr || ctx.prompts == nullptr || ctx.rng == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "incomplete execution context");
  }
  ExecutionResult result;
  const bool filtered = !ast.filters.empty();
  std::vector<const Instance*> scope;
  if (filtered) {
    scope = ctx.store->filter(ast.filters, ast.connective);
    for (const auto* inst : scope) result.scope.push_back(inst->id);
  }
  std::vector<std::string> texts;
  for (const auto& node : ast.operations) {
    for (auto& step : run(node, scope, filtered, ctx, result.provenance)) {
      texts.push_back(step.response_text);
      result.steps.push_back(std::move(step));
    }
  }
  result.response_text = text::join(texts, "\n\n");
  return result;
}

}  // namespace xaichat
