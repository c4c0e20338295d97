#include "xaichat/dialogue.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "xaichat/errors.hpp"
#include "xaichat/text.hpp"
#include "xaichat/validate.hpp"

namespace xaichat {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Confirmation detection
// ---------------------------------------------------------------------------

std::string_view to_string(Confirmation c) {
  switch (c) {
    case Confirmation::Confirm: return "confirm";
    case Confirmation::Decline: return "decline";
    case Confirmation::Other: return "other";
  }
  return "other";
}

const std::vector<std::string>& ConfirmationDetector::confirm_templates() {
  static const std::vector<std::string> t{"yes",        "yes please", "sure",     "ok",        "okay",      "yeah",
                                          "yes, show me", "go ahead", "sounds good", "of course", "please do", "absolutely"};
  return t;
}

const std::vector<std::string>& ConfirmationDetector::decline_templates() {
  static const std::vector<std::string> t{"no",         "no thanks", "no thank you",   "nope",  "not now",          "maybe later",
                                          "i'm good", "skip it",   "not interested", "don't", "no, that's fine", "nah"};
  return t;
}

ConfirmationDetector::ConfirmationDetector(std::shared_ptr<SimilarityService> similarity, double threshold)
    : similarity_(similarity ? std::move(similarity) : std::make_shared<SimilarityService>()), threshold_(threshold) {}

std::pair<double, double> ConfirmationDetector::scores(const std::string& text) const {
  const auto c = similarity_->similarities(text, confirm_templates());
  const auto d = similarity_->similarities(text, decline_templates());
  return {*std::max_element(c.begin(), c.end()), *std::max_element(d.begin(), d.end())};
}

ConfirmationResult ConfirmationDetector::detect(const std::string& raw) const {
  ConfirmationResult r;
  const std::string text = text::to_lower(text::trim(raw));
  if (text.empty()) return r;
  const auto [c_full, d_full] = scores(text);
  r.confirm_score = c_full;
  r.decline_score = d_full;
  if (std::max(c_full, d_full) >= threshold_) {
    r.kind = c_full >= d_full ? Confirmation::Confirm : Confirmation::Decline;
    return r;
  }
  const auto cut = text.find_first_of(",.!;");
  if (cut == std::string::npos) return r;
  const std::string lead = text::trim(text.substr(0, cut));
  const std::string rest = text::trim(raw.substr(std::min(raw.size(), raw.find_first_of(",.!;") + 1)));
  if (lead.empty()) return r;
  const auto [c_lead, d_lead] = scores(lead);
  r.confirm_score = std::max(r.confirm_score, c_lead);
  r.decline_score = std::max(r.decline_score, d_lead);
  if (std::max(c_lead, d_lead) >= threshold_) {
    r.kind = c_lead >= d_lead ? Confirmation::Confirm : Confirmation::Decline;
    r.remainder = rest;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Suggestions
// ---------------------------------------------------------------------------

SuggestionGraph::SuggestionGraph(std::map<std::string, std::vector<std::string>> edges, const Catalog& catalog)
    : edges_(std::move(edges)) {
  for (const auto& [from, targets] : edges_) {
    if (catalog.find(from) == nullptr) throw Error(ErrorCode::InvalidArgument, "suggestion graph: unknown op " + from);
    for (const auto& t : targets) {
      const auto* spec = catalog.find(t);
      if (spec == nullptr || spec->is_filter() || spec->is_logic()) {
        throw Error(ErrorCode::InvalidArgument, "suggestion graph: bad target " + t);
      }
      if (t == from) throw Error(ErrorCode::InvalidArgument, "suggestion graph: self edge on " + from);
    }
  }
}

SuggestionGraph SuggestionGraph::standard(const Catalog& catalog) {
  std::map<std::string, std::vector<std::string>> e;
  e["predict"] = {"score", "mistakes", "randompredict", "nlpattribute", "rationalize", "cfe", "augment"};
  e["randompredict"] = {"score", "mistakes", "predict", "nlpattribute", "rationalize"};
  e["mistakes"] = {"score", "predict", "randompredict", "nlpattribute", "rationalize"};
  e["score"] = {"mistakes", "predict", "randompredict", "nlpattribute", "rationalize"};
  e["nlpattribute"] = {"rationalize", "cfe", "augment", "similarity"};
  e["rationalize"] = {"nlpattribute", "cfe", "augment", "similarity"};
  e["cfe"] = {"augment", "nlpattribute", "rationalize", "predict"};
  e["augment"] = {"cfe", "predict", "similarity", "nlpattribute"};
  e["show"] = {"countdata", "label", "keywords", "similarity", "predict"};
  e["countdata"] = {"label", "show", "keywords", "data"};
  e["label"] = {"countdata", "show", "score", "keywords"};
  e["data"] = {"model", "websearch", "label", "countdata"};
  e["model"] = {"data", "websearch", "function", "score"};
  e["websearch"] = {"data", "model", "similarity"};
  e["function"] = {"self", "qatutorial", "data"};
  e["self"] = {"function", "qatutorial", "model"};
  e["qatutorial"] = {"function", "self", "data"};
  e["keywords"] = {"similarity", "label", "show", "countdata"};
  e["similarity"] = {"keywords", "show", "predict", "rationalize"};
  return SuggestionGraph(std::move(e), catalog);
}

const std::vector<std::string>& SuggestionGraph::candidates(const std::string& op) const {
  static const std::vector<std::string> none;
  auto it = edges_.find(op);
  return it == edges_.end() ? none : it->second;
}

std::map<std::string, SuggestionPhrase> load_suggestion_phrases(const std::string& path, const Catalog& catalog) {
  const auto doc = nlohmann::json::parse(text::read_file(path), nullptr, false);
  if (!doc.is_object()) throw SchemaError(0, path + ": expected a JSON object");
  std::map<std::string, SuggestionPhrase> out;
  for (const auto& [op, entry] : doc.items()) {
    if (!entry.is_object() || !entry.contains("offer") || !entry.contains("question")) {
      throw SchemaError(0, path + ": '" + op + "' needs offer and question");
    }
    out[op] = {entry["offer"].get<std::string>(), entry["question"].get<std::string>()};
  }
  for (const auto& op : catalog.main_operation_names()) {
    if (out.find(op) == out.end()) throw SchemaError(0, path + ": missing phrasing for '" + op + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Settings
// ---------------------------------------------------------------------------

nlohmann::ordered_json settings_json(const SessionSettings& s) {
  nlohmann::ordered_json j;
  j["expertise"] = to_string(s.expertise);
  j["cot_strategy"] = to_string(s.cot);
  j["parsing_strategy"] = to_string(s.parsing);
  j["prompt_overrides"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.prompt_overrides) j["prompt_overrides"][k] = v;
  return j;
}

SessionSettings apply_settings(SessionSettings base, const nlohmann::json& patch) {
  if (!patch.is_object()) throw Error(ErrorCode::InvalidArgument, "settings must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    if (key == "expertise") {
      if (!value.is_string()) throw Error(ErrorCode::InvalidArgument, "expertise must be a string");
      base.expertise = expertise_from_string(value.get<std::string>());
    } else if (key == "cot_strategy") {
      if (!value.is_string()) throw Error(ErrorCode::InvalidArgument, "cot_strategy must be a string");
      base.cot = cot_strategy_from_string(value.get<std::string>());
    } else if (key == "parsing_strategy") {
      if (!value.is_string()) throw Error(ErrorCode::InvalidArgument, "parsing_strategy must be a string");
      base.parsing = strategy_from_string(value.get<std::string>());
    } else if (key == "prompt_overrides") {
      if (!value.is_object()) throw Error(ErrorCode::InvalidArgument, "prompt_overrides must be an object");
      base.prompt_overrides.clear();
      for (const auto& [name, body] : value.items()) {
        if (!body.is_string()) throw Error(ErrorCode::InvalidArgument, "prompt override '" + name + "' must be a string");
        base.prompt_overrides[name] = body.get<std::string>();
      }
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown setting '" + key + "'");
    }
  }
  return base;
}

std::string_view to_string(TurnKind k) {
  switch (k) {
    case TurnKind::Executed: return "executed";
    case TurnKind::Clarification: return "clarification";
    case TurnKind::Declined: return "declined";
  }
  return "executed";
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<const Dataset> find_dataset(const DialogueServices& s, const std::string& name) {
  auto it = s.datasets.find(name);
  if (it == s.datasets.end()) throw Error(ErrorCode::NotFound, "unknown dataset '" + name + "'");
  return it->second;
}

bool is_backend_failure(ErrorCode c) { return c == ErrorCode::BackendUnavailable || c == ErrorCode::Timeout; }

nlohmann::ordered_json suggestion_json(const std::optional<Suggestion>& s) {
  if (!s) return nullptr;
  nlohmann::ordered_json j;
  j["op"] = s->op;
  j["offer"] = s->offer;
  j["question"] = s->question;
  j["query"] = s->query;
  return j;
}

std::optional<Suggestion> suggestion_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return Suggestion{j.at("op").get<std::string>(), j.value("offer", ""), j.value("question", ""),
                    j.value("query", "")};
}

}  // namespace

Session::Session(std::string id, std::shared_ptr<const DialogueServices> services, const std::string& dataset,
                 std::uint64_t rng_seed)
    : id_(std::move(id)), services_(std::move(services)), dataset_name_(dataset), seed_(rng_seed), rng_(rng_seed) {
  if (!services_ || !services_->parser || !services_->executor || !services_->prompts) {
    throw Error(ErrorCode::InvalidArgument, "session needs parser, executor and prompts");
  }
  settings_.parsing = services_->config.default_strategy;
  effective_prompts_ = services_->prompts;
  store_ = std::make_unique<DataStore>(find_dataset(*services_, dataset));
}

void Session::update_settings(const SessionSettings& s) {
  auto prompts = s.prompt_overrides.empty()
                     ? services_->prompts
                     : std::make_shared<const PromptStore>(services_->prompts->with_overrides(s.prompt_overrides));
  settings_ = s;
  effective_prompts_ = std::move(prompts);
}

void Session::switch_dataset(const std::string& name) {
  auto ds = find_dataset(*services_, name);
  store_ = std::make_unique<DataStore>(std::move(ds));
  dataset_name_ = name;
  cache_.clear();
  focus_.reset();
  last_op_.reset();
  pending_.reset();
  suggested_.clear();
  executed_.clear();
}

const Instance& Session::add_custom_input(const nlohmann::json& fields) {
  const auto& inst = store_->add_custom_input(fields);
  nlohmann::ordered_json recorded = nlohmann::ordered_json::parse(fields.dump());
  custom_inputs_.emplace_back(turns_.size(), std::move(recorded));
  return inst;
}

ParseContext Session::parse_context() const {
  ParseContext ctx;
  ctx.dataset_size = store_->dataset_size();
  ctx.custom_input_ids = store_->custom_input_ids();
  ctx.focus_id = focus_;
  ctx.last_op = last_op_;
  ctx.max_new_tokens = services_->config.max_new_tokens;
  ctx.small_model = services_->config.small_model;
  return ctx;
}

std::optional<Suggestion> Session::suggest_followup(const std::string& op) const {
  const auto& catalog = *services_->catalog;
  for (const auto& candidate : services_->graph.candidates(op)) {
    if (std::find(suggested_.begin(), suggested_.end(), candidate) != suggested_.end()) continue;
    if (executed_.count(candidate) != 0) continue;
    const auto& spec = catalog.lookup(candidate);
    if (spec.instance_scoped() && !focus_) continue;
    auto phrase_it = services_->phrases.find(candidate);
    if (phrase_it == services_->phrases.end()) continue;

    std::string query;
    std::string topic = spec.topic;
    if (candidate == "randompredict") {
      query = "randompredict " + std::to_string(std::min<std::int64_t>(10, store_->dataset_size()));
    } else if (candidate == "qatutorial") {
      const auto* about = catalog.find(op);
      if (about == nullptr || about->is_filter() || about->is_logic() || op == "qatutorial") continue;
      query = "qatutorial " + op;
      topic = about->topic;
    } else {
      query = render_query(parse_query(candidate, catalog, ParseOptions{true}).ast, catalog);
    }
    if (spec.instance_scoped()) query = "filter id " + std::to_string(*focus_) + " and " + query;
    // The suggestion must run in the current context.
    ValidationContext vctx{store_->dataset_size(), store_->custom_input_ids(), focus_.has_value()};
    if (!validate(parse_query(query, catalog), catalog, vctx).ok()) continue;

    const std::map<std::string, std::string> values{
        {"id", focus_ ? std::to_string(*focus_) : std::string()}, {"topic", topic}, {"op", candidate}};
    Suggestion s;
    s.op = candidate;
    s.offer = text::fill_placeholders(phrase_it->second.offer, values);
    s.question = text::fill_placeholders(phrase_it->second.question, values);
    s.query = query;
    return s;
  }
  return std::nullopt;
}

std::string Session::examples_for(const std::string& user_text) const {
  const auto& pool = effective_prompts_->gd_pool();
  std::vector<std::string> utterances;
  for (const auto& d : pool) utterances.push_back(d.utterance);
  const auto scores = services_->similarity ? services_->similarity->similarities(user_text, utterances)
                                            : SimilarityService().similarities(user_text, utterances);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::string out;
  for (std::size_t i = 0; i < std::min<std::size_t>(3, order.size()); ++i) {
    out += "- " + pool[order[i]].utterance + "\n";
  }
  return text::trim(out);
}

Turn Session::clarification(const std::string& user_text, const std::string& reason) {
  Turn t;
  t.user_text = user_text;
  t.kind = TurnKind::Clarification;
  t.clarification = reason;
  t.response_text = services_->executor->templates().render("clarification", {{"examples", examples_for(user_text)}}, rng_);
  return t;
}

void Session::after_execution(Turn& turn, const QueryAst& ast) {
  for (const auto& f : ast.filters) {
    if (const auto* by_id = std::get_if<ById>(&f)) focus_ = by_id->id;
  }
  auto remember = [&](const std::string& op) {
    if (std::find(suggested_.begin(), suggested_.end(), op) == suggested_.end()) suggested_.push_back(op);
  };
  for (const auto& node : ast.operations) {
    executed_.insert(node.op);
    remember(node.op);
  }
  if (ast.operations.empty()) return;
  last_op_ = ast.operations.back().op;
  turn.suggestion = suggest_followup(*last_op_);
  if (turn.suggestion) {
    remember(turn.suggestion->op);
    pending_ = turn.suggestion;
    turn.response_text += "\n\n" + services_->executor->templates().render(
                                       "suggestion", {{"offer", turn.suggestion->offer}}, rng_);
  }
}

Turn Session::run_query(const std::string& user_text, const QueryAst& ast) {
  Turn t;
  t.user_text = user_text;
  ExecutionContext ctx;
  ctx.store = store_.get();
  ctx.cache = &cache_;
  ctx.prompts = effective_prompts_.get();
  ctx.rng = &rng_;
  ctx.expertise = settings_.expertise;
  ctx.cot = settings_.cot;
  ctx.focus_id = focus_;
  ctx.verify_cfe = services_->config.verify_cfe;
  try {
    t.execution = services_->executor->execute(ast, ctx);
  } catch (const Error& e) {
    if (is_backend_failure(e.code())) throw;
    return clarification(user_text, e.what());
  }
  t.kind = TurnKind::Executed;
  t.parse = render_query(ast, *services_->catalog);
  t.response_text = t.execution->response_text;
  after_execution(t, ast);
  return t;
}

void Session::record(Turn turn) {
  turn.settings = settings_;
  turn.dataset = dataset_name_;
  turn.finished = std::chrono::system_clock::now();
  turns_.push_back(std::move(turn));
}

const Turn& Session::handle_turn(const std::string& user_text) {
  const auto started = std::chrono::system_clock::now();
  // Backend failures must leave the session as it was, including its RNG position.
  const auto saved_rng = rng_;
  const auto saved_pending = pending_;
  try {
    std::string request = user_text;
    std::optional<Suggestion> pending = pending_;
    pending_.reset();
    if (pending) {
      const auto c = ConfirmationDetector(services_->similarity).detect(user_text);
      if (c.kind == Confirmation::Confirm && c.remainder.empty()) {
        Turn t = run_query(user_text, parse_query(pending->query, *services_->catalog));
        t.started = started;
        record(std::move(t));
        return turns_.back();
      }
      if (c.kind == Confirmation::Decline && c.remainder.empty()) {
        Turn t;
        t.user_text = user_text;
        t.kind = TurnKind::Declined;
        t.response_text = services_->executor->templates().render("decline_ack", {}, rng_);
        t.clarification = t.response_text;
        t.started = started;
        record(std::move(t));
        return turns_.back();
      }
      if (c.kind != Confirmation::Other) request = c.remainder;
    }

    const auto pctx = parse_context();
    std::optional<ParseResult> parsed;
    try {
      parsed = services_->parser->parse(settings_.parsing, request, *effective_prompts_, pctx);
    } catch (const Error& e) {
      if (is_backend_failure(e.code())) throw;
      Turn t = clarification(user_text, e.what());
      t.strategy = settings_.parsing;
      t.started = started;
      record(std::move(t));
      return turns_.back();
    }
    ValidationContext vctx{pctx.dataset_size, pctx.custom_input_ids, pctx.focus_id.has_value()};
    const auto report = validate(parsed->ast, *services_->catalog, vctx);
    Turn t = report.ok() ? run_query(user_text, parsed->ast) : clarification(user_text, report.summary());
    t.strategy = parsed->strategy;
    t.repairs = parsed->repairs;
    t.started = started;
    record(std::move(t));
    return turns_.back();
  } catch (...) {
    rng_ = saved_rng;
    pending_ = saved_pending;
    throw;
  }
}

// ---------------------------------------------------------------------------
// Export, replay, restore
// ---------------------------------------------------------------------------

nlohmann::ordered_json Session::export_json() const {
  nlohmann::ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["session_id"] = id_;
  doc["dataset"] = dataset_name_;
  doc["rng_seed"] = seed_;
  doc["settings"] = settings_json(settings_);
  doc["custom_inputs"] = nlohmann::ordered_json::array();
  for (const auto& [after, fields] : custom_inputs_) {
    doc["custom_inputs"].push_back({{"after_turn", after}, {"fields", fields}});
  }
  doc["turns"] = nlohmann::ordered_json::array();
  for (const auto& t : turns_) {
    nlohmann::ordered_json j;
    j["user_text"] = t.user_text;
    j["kind"] = to_string(t.kind);
    j["parse"] = t.parse ? nlohmann::ordered_json(*t.parse) : nlohmann::ordered_json();
    j["strategy"] = t.strategy ? nlohmann::ordered_json(to_string(*t.strategy)) : nlohmann::ordered_json();
    j["repairs"] = nlohmann::ordered_json::array();
    for (auto r : t.repairs) j["repairs"].push_back(to_string(r));
    j["response_text"] = t.response_text;
    j["suggestion"] = suggestion_json(t.suggestion);
    j["dataset"] = t.dataset;
    j["settings"] = settings_json(t.settings);
    doc["turns"].push_back(std::move(j));
  }
  return doc;
}

std::string Session::export_text() const { return export_json().dump(2) + "\n"; }

namespace {

void check_export(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("schema_version", 0) != Session::kSchemaVersion || !doc.contains("turns") ||
      !doc["turns"].is_array()) {
    throw SchemaError(0, "not a session export (schema_version 1 expected)");
  }
}

std::string initial_dataset(const nlohmann::json& doc) {
  if (!doc["turns"].empty() && doc["turns"][0].contains("dataset")) return doc["turns"][0]["dataset"].get<std::string>();
  return doc.at("dataset").get<std::string>();
}

}  // namespace

std::unique_ptr<Session> Session::replay(const nlohmann::json& doc, std::shared_ptr<const DialogueServices> services) {
  check_export(doc);
  auto s = std::make_unique<Session>(doc.value("session_id", std::string("replay")), services, initial_dataset(doc),
                                     doc.value("rng_seed", std::uint64_t{0}));
  const auto& inputs = doc.value("custom_inputs", nlohmann::json::array());
  std::size_t next_input = 0;
  auto add_inputs_up_to = [&](std::size_t turn_index) {
    while (next_input < inputs.size() && inputs[next_input].at("after_turn").get<std::size_t>() <= turn_index) {
      s->add_custom_input(inputs[next_input].at("fields"));
      ++next_input;
    }
  };
  const auto& turns = doc["turns"];
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const auto& t = turns[i];
    if (t.contains("dataset") && t["dataset"].get<std::string>() != s->dataset_name()) {
      s->switch_dataset(t["dataset"].get<std::string>());
    }
    if (t.contains("settings")) s->update_settings(apply_settings(s->settings(), t["settings"]));
    add_inputs_up_to(i);
    s->handle_turn(t.at("user_text").get<std::string>());
  }
  add_inputs_up_to(turns.size());
  if (doc.contains("settings")) s->update_settings(apply_settings(s->settings(), doc["settings"]));
  return s;
}

std::unique_ptr<Session> Session::restore(const nlohmann::json& doc, std::shared_ptr<const DialogueServices> services) {
  check_export(doc);
  auto s = std::make_unique<Session>(doc.value("session_id", std::string("restored")), services, initial_dataset(doc),
                                     doc.value("rng_seed", std::uint64_t{0}));
  const auto& inputs = doc.value("custom_inputs", nlohmann::json::array());
  std::size_t next_input = 0;
  const auto& catalog = *services->catalog;
  const auto& turns = doc["turns"];
  for (std::size_t i = 0; i <= turns.size(); ++i) {
    while (next_input < inputs.size() && inputs[next_input].at("after_turn").get<std::size_t>() <= i) {
      s->add_custom_input(inputs[next_input].at("fields"));
      ++next_input;
    }
    if (i == turns.size()) break;
    const auto& j = turns[i];
    if (j.contains("dataset") && j["dataset"].get<std::string>() != s->dataset_name()) {
      s->switch_dataset(j["dataset"].get<std::string>());
    }
    Turn t;
    t.user_text = j.at("user_text").get<std::string>();
    const auto kind = j.value("kind", std::string("executed"));
    t.kind = kind == "clarification" ? TurnKind::Clarification
                                     : kind == "declined" ? TurnKind::Declined : TurnKind::Executed;
    if (j.contains("parse") && j["parse"].is_string()) t.parse = j["parse"].get<std::string>();
    if (j.contains("strategy") && j["strategy"].is_string()) t.strategy = strategy_from_string(j["strategy"].get<std::string>());
    for (const auto& r : j.value("repairs", nlohmann::json::array())) {
      const auto name = r.get<std::string>();
      for (auto candidate : {Repair::FuzzyOpMatch, Repair::IdHallucinationRemoved, Repair::IdExtractedFromUtterance,
                             Repair::DefaultsFilled}) {
        if (to_string(candidate) == name) t.repairs.push_back(candidate);
      }
    }
    t.response_text = j.at("response_text").get<std::string>();
    if (t.kind != TurnKind::Executed) t.clarification = t.response_text;
    t.suggestion = suggestion_from_json(j.value("suggestion", nlohmann::json()));
    t.settings = j.contains("settings") ? apply_settings(SessionSettings{}, j["settings"]) : s->settings();
    t.dataset = s->dataset_name();

    s->pending_.reset();
    if (t.parse) {
      const auto ast = parse_query(*t.parse, catalog);
      for (const auto& f : ast.filters) {
        if (const auto* by_id = std::get_if<ById>(&f)) s->focus_ = by_id->id;
      }
      for (const auto& node : ast.operations) {
        s->executed_.insert(node.op);
        if (std::find(s->suggested_.begin(), s->suggested_.end(), node.op) == s->suggested_.end()) {
          s->suggested_.push_back(node.op);
        }
      }
      if (!ast.operations.empty()) s->last_op_ = ast.operations.back().op;
    }
    if (t.suggestion) {
      if (std::find(s->suggested_.begin(), s->suggested_.end(), t.suggestion->op) == s->suggested_.end()) {
        s->suggested_.push_back(t.suggestion->op);
      }
      s->pending_ = t.suggestion;
    }
    s->turns_.push_back(std::move(t));
  }
  if (doc.contains("settings")) s->update_settings(apply_settings(s->settings(), doc["settings"]));
  return s;
}

// ---------------------------------------------------------------------------
// SessionStore
// ---------------------------------------------------------------------------

SessionStore::SessionStore(std::shared_ptr<const DialogueServices> services, std::optional<std::string> snapshot_dir,
                           std::uint64_t base_seed)
    : services_(std::move(services)), dir_(std::move(snapshot_dir)), base_seed_(base_seed), id_rng_(std::random_device{}()) {
  if (services_->datasets.empty()) throw Error(ErrorCode::InvalidArgument, "no datasets configured");
  if (dir_) fs::create_directories(*dir_);
}

std::string SessionStore::default_dataset() const {
  return services_->active_dataset.empty() ? services_->datasets.begin()->first : services_->active_dataset;
}

std::shared_ptr<Session> SessionStore::create(const std::optional<std::string>& dataset) {
  std::lock_guard lock(mu_);
  std::ostringstream id;
  id << std::hex << std::setfill('0') << std::setw(16) << id_rng_() << std::setw(16) << id_rng_();
  const std::uint64_t seed = base_seed_ + created_++;
  auto session = std::make_shared<Session>(id.str(), services_, dataset.value_or(default_dataset()), seed);
  sessions_[session->id()] = session;
  return session;
}

std::shared_ptr<Session> SessionStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "unknown session '" + id + "'");
  return it->second;
}

void SessionStore::snapshot(const Session& session) const {
  if (!dir_) return;
  const fs::path path = fs::path(*dir_) / (session.id() + ".json");
  const fs::path tmp = fs::path(*dir_) / (session.id() + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << session.export_text();
  }
  fs::rename(tmp, path);
}

std::size_t SessionStore::load_snapshots() {
  if (!dir_) return 0;
  std::size_t loaded = 0;
  for (const auto& entry : fs::directory_iterator(*dir_)) {
    if (entry.path().extension() != ".json") continue;
    const auto doc = nlohmann::json::parse(text::read_file(entry.path().string()), nullptr, false);
    if (doc.is_discarded()) continue;
    std::shared_ptr<Session> s = Session::restore(doc, services_);
    std::lock_guard lock(mu_);
    sessions_[s->id()] = std::move(s);
    ++created_;
    ++loaded;
  }
  return loaded;
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

}  // namespace xaichat
