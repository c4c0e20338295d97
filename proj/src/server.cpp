#include "xaichat/server.hpp"

#include <httplib.h>

#include <functional>

#include "xaichat/text.hpp"

namespace xaichat {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::IdNotFound:
      return 404;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::Timeout:
      return 503;
    default:
      return 400;
  }
}

nlohmann::ordered_json error_body(ErrorCode code, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"]["code"] = to_string(code);
  j["error"]["message"] = message;
  return j;
}

nlohmann::ordered_json turn_json(const Turn& turn, std::size_t index) {
  nlohmann::ordered_json j;
  j["turn_index"] = index;
  j["kind"] = to_string(turn.kind);
  j["response_text"] = turn.response_text;
  j["parse"] = turn.parse ? nlohmann::ordered_json(*turn.parse) : nlohmann::ordered_json();
  j["strategy"] = turn.strategy ? nlohmann::ordered_json(to_string(*turn.strategy)) : nlohmann::ordered_json();
  j["repairs"] = nlohmann::ordered_json::array();
  for (auto r : turn.repairs) j["repairs"].push_back(to_string(r));
  if (turn.suggestion) {
    j["suggestion"] = {{"op", turn.suggestion->op},
                       {"offer", turn.suggestion->offer},
                       {"question", turn.suggestion->question},
                       {"query", turn.suggestion->query}};
  } else {
    j["suggestion"] = nullptr;
  }
  j["clarification"] = turn.clarification ? nlohmann::ordered_json(*turn.clarification) : nlohmann::ordered_json();
  j["scope"] = nlohmann::ordered_json::array();
  j["results"] = nlohmann::ordered_json::array();
  j["provenance"] = nlohmann::ordered_json::array();
  if (turn.execution) {
    for (auto id : turn.execution->scope) j["scope"].push_back(id);
    for (const auto& step : turn.execution->steps) {
      j["results"].push_back({{"op", step.op}, {"payload", payload_json(step.payload)}, {"response_text", step.response_text}});
    }
    for (const auto& call : turn.execution->provenance) {
      j["provenance"].push_back(
          {{"kind", call.kind}, {"backend_id", call.backend_id}, {"prompt", call.prompt}, {"output", call.output}});
    }
  }
  return j;
}

namespace {

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

nlohmann::json body_object(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto doc = nlohmann::json::parse(req.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw SchemaError(0, "request body must be a JSON object");
  return doc;
}

std::string required_string(const nlohmann::json& body, const std::string& key) {
  if (!body.contains(key) || !body[key].is_string()) throw SchemaError(0, "'" + key + "' must be a string");
  return body[key].get<std::string>();
}

std::int64_t query_int(const httplib::Request& req, const std::string& key, std::int64_t fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string v = req.get_param_value(key);
  try {
    std::size_t used = 0;
    const auto n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "'" + key + "' must be a non-negative integer");
  }
}

}  // namespace

ApiServer::ApiServer(Runtime runtime)
    : runtime_(std::move(runtime)),
      store_(std::make_unique<SessionStore>(runtime_.services, runtime_.config.snapshot_dir, runtime_.config.seed)),
      http_(std::make_unique<httplib::Server>()) {
  store_->load_snapshots();
  http_->set_read_timeout(runtime_.config.turn_timeout_s, 0);
  http_->set_write_timeout(runtime_.config.turn_timeout_s, 0);
  install_routes();
}

ApiServer::~ApiServer() { stop(); }

bool ApiServer::listen(const std::string& host, int port) { return http_->listen(host, port); }

int ApiServer::bind_any_port(const std::string& host) { return http_->bind_to_any_port(host); }

bool ApiServer::listen_after_bind() { return http_->listen_after_bind(); }

void ApiServer::stop() {
  if (http_ && http_->is_running()) http_->stop();
}

bool ApiServer::running() const { return http_->is_running(); }

nlohmann::ordered_json ApiServer::health() const {
  nlohmann::ordered_json backends;
  bool ok = true;
  {
    const bool up = runtime_.generator->reachable();
    ok = ok && up;
    backends["generator"] = {{"configured", true},
                             {"backend_id", runtime_.generator->backend_id()},
                             {"reachable", up},
                             {"supports_grammar", runtime_.generator->supports_grammar()}};
  }
  if (runtime_.embedder) {
    const bool up = runtime_.embedder->reachable();
    ok = ok && up;
    backends["embedder"] = {
        {"configured", true}, {"backend_id", runtime_.embedder->backend_id()}, {"reachable", up}};
  } else {
    backends["embedder"] = {{"configured", false}, {"fallback", "lexical similarity"}};
  }
  if (runtime_.attributor) {
    const bool up = runtime_.attributor->reachable();
    ok = ok && up;
    backends["attributor"] = {
        {"configured", true}, {"backend_id", runtime_.attributor->backend_id()}, {"reachable", up}};
  } else {
    backends["attributor"] = {{"configured", false}, {"fallback", "nlpattribute reports unavailable"}};
  }
  nlohmann::ordered_json j;
  j["status"] = ok ? "ok" : "degraded";
  j["backends"] = std::move(backends);
  j["sessions"] = store_->size();
  j["datasets"] = nlohmann::ordered_json::array();
  for (const auto& [name, _] : runtime_.services->datasets) j["datasets"].push_back(name);
  return j;
}

void ApiServer::install_routes() {
  // Every handler runs inside this wrapper so errors map to documented JSON bodies.
  auto guarded = [this](Handler h) {
    return [this, h](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        auto body = error_body(e.code(), e.what());
        if (http_status(e.code()) == 503) body["degradation"] = health()["backends"];
        send_json(res, http_status(e.code()), body);
      } catch (const std::exception& e) {
        send_json(res, 500, error_body(ErrorCode::InvalidArgument, e.what()));
      }
    };
  };

  http_->Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, health());
  }));

  http_->Get("/api/operations", guarded([this](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(runtime_.services->catalog->export_json() + "\n", "application/json");
  }));

  http_->Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = body_object(req);
    std::optional<std::string> dataset;
    if (body.contains("dataset")) dataset = required_string(body, "dataset");
    // Reject bad settings before a session exists.
    if (body.contains("settings")) (void)apply_settings(SessionSettings{}, body["settings"]);
    auto session = store_->create(dataset);
    std::lock_guard lock(session->mutex());
    if (body.contains("settings")) session->update_settings(apply_settings(session->settings(), body["settings"]));
    store_->snapshot(*session);
    nlohmann::ordered_json j;
    j["session_id"] = session->id();
    j["dataset"] = session->dataset_name();
    j["settings"] = settings_json(session->settings());
    send_json(res, 201, j);
  }));

  http_->Get(R"(/api/sessions/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto session = store_->get(req.matches[1]);
    std::lock_guard lock(session->mutex());
    nlohmann::ordered_json j;
    j["session_id"] = session->id();
    j["dataset"] = session->dataset_name();
    j["settings"] = settings_json(session->settings());
    j["turns"] = session->turns().size();
    j["focus_id"] = session->focus_id() ? nlohmann::ordered_json(*session->focus_id()) : nlohmann::ordered_json();
    j["custom_input_ids"] = session->store().custom_input_ids();
    send_json(res, 200, j);
  }));

  http_->Post(R"(/api/sessions/([0-9a-f]+)/turns)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                auto session = store_->get(req.matches[1]);
                const auto text = required_string(body_object(req), "text");
                std::lock_guard lock(session->mutex());
                const auto& turn = session->handle_turn(text);
                store_->snapshot(*session);
                send_json(res, 200, turn_json(turn, session->turns().size() - 1));
              }));

  http_->Get(R"(/api/sessions/([0-9a-f]+)/export)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto session = store_->get(req.matches[1]);
               std::lock_guard lock(session->mutex());
               res.status = 200;
               res.set_header("Content-Disposition", "attachment; filename=\"session-" + session->id() + ".json\"");
               res.set_content(session->export_text(), "application/json");
             }));

  http_->Put(R"(/api/sessions/([0-9a-f]+)/settings)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto session = store_->get(req.matches[1]);
               auto body = body_object(req);
               std::lock_guard lock(session->mutex());
               std::optional<std::string> dataset;
               if (body.contains("dataset")) {
                 dataset = required_string(body, "dataset");
                 body.erase("dataset");
               }
               // Validate everything before touching the session.
               const auto settings = apply_settings(session->settings(), body);
               if (!settings.prompt_overrides.empty()) {
                 (void)runtime_.services->prompts->with_overrides(settings.prompt_overrides);
               }
               if (dataset && *dataset != session->dataset_name()) session->switch_dataset(*dataset);
               session->update_settings(settings);
               store_->snapshot(*session);
               nlohmann::ordered_json j;
               j["session_id"] = session->id();
               j["dataset"] = session->dataset_name();
               j["settings"] = settings_json(session->settings());
               send_json(res, 200, j);
             }));

  http_->Get(R"(/api/sessions/([0-9a-f]+)/prompts)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto session = store_->get(req.matches[1]);
               std::lock_guard lock(session->mutex());
               nlohmann::ordered_json j;
               j["cot_strategy"] = to_string(session->settings().cot);
               j["active"] = {{"rationalize", cot_template_name(session->settings().cot)},
                              {"preamble", "preamble_" + text::to_lower(to_string(session->settings().expertise))}};
               j["templates"] = nlohmann::ordered_json::object();
               for (const auto& [name, body] : session->effective_prompts().templates()) j["templates"][name] = body;
               j["required_placeholders"] = nlohmann::ordered_json::object();
               for (const auto& [name, _] : session->effective_prompts().templates()) {
                 j["required_placeholders"][name] = PromptStore::required_placeholders(name);
               }
               send_json(res, 200, j);
             }));

  http_->Get("/api/datasets", guarded([this](const httplib::Request&, httplib::Response& res) {
    nlohmann::ordered_json j;
    j["active"] = store_->default_dataset();
    j["datasets"] = nlohmann::ordered_json::array();
    for (const auto& [name, ds] : runtime_.services->datasets) {
      j["datasets"].push_back({{"name", name},
                               {"task", to_string(ds->task)},
                               {"size", ds->size()},
                               {"labels", ds->label_names},
                               {"description", ds->description}});
    }
    send_json(res, 200, j);
  }));

  http_->Get(R"(/api/datasets/([A-Za-z0-9_\-.]+)/instances)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto name = req.matches[1].str();
               auto it = runtime_.services->datasets.find(name);
               if (it == runtime_.services->datasets.end()) {
                 throw Error(ErrorCode::NotFound, "unknown dataset '" + name + "'");
               }
               const auto& ds = *it->second;
               const auto offset = query_int(req, "offset", 0);
               const auto limit = std::min<std::int64_t>(query_int(req, "limit", 20), 200);
               nlohmann::ordered_json j;
               j["dataset"] = name;
               j["total"] = ds.size();
               j["offset"] = offset;
               j["limit"] = limit;
               j["instances"] = nlohmann::ordered_json::array();
               for (std::int64_t i = offset; i < std::min(ds.size(), offset + limit); ++i) {
                 j["instances"].push_back(instance_json(ds, ds.instances[static_cast<std::size_t>(i)]));
               }
               send_json(res, 200, j);
             }));

  http_->Post("/api/custom-inputs", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = body_object(req);
    auto session = store_->get(required_string(body, "session_id"));
    if (!body.contains("fields") || !body["fields"].is_object()) throw SchemaError(0, "'fields' must be an object");
    std::lock_guard lock(session->mutex());
    const auto& inst = session->add_custom_input(body["fields"]);
    store_->snapshot(*session);
    nlohmann::ordered_json j;
    j["session_id"] = session->id();
    j["id"] = inst.id;
    j["instance"] = instance_json(session->store().dataset(), inst);
    j["history"] = nlohmann::ordered_json::array();
    for (auto id : session->store().custom_input_ids()) j["history"].push_back(id);
    send_json(res, 201, j);
  }));

  http_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) {
      send_json(res, 404, error_body(ErrorCode::NotFound, "no such endpoint"));
    }
  });
}

}  // namespace xaichat
