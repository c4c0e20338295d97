#include <httplib.h>

#include <cmath>
#include <json.hpp>
#include <thread>

#include "xaichat/backends.hpp"
#include "xaichat/errors.hpp"

namespace xaichat {

namespace {

using nlohmann::json;

std::unique_ptr<httplib::Client> make_client(const HttpEndpoint& ep) {
  auto client = std::make_unique<httplib::Client>(ep.base_url);
  if (!client->is_valid()) {
    throw Error(ErrorCode::BackendUnavailable, "invalid backend url '" + ep.base_url + "'");
  }
  const auto secs = ep.timeout.count() / 1000;
  const auto usecs = (ep.timeout.count() % 1000) * 1000;
  client->set_connection_timeout(secs, usecs);
  client->set_read_timeout(secs, usecs);
  client->set_write_timeout(secs, usecs);
  return client;
}

json post_once(const HttpEndpoint& ep, const std::string& path, const json& body) {
  auto client = make_client(ep);
  auto res = client->Post(path, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write ||
        err == httplib::Error::ConnectionTimeout) {
      throw Error(ErrorCode::Timeout, ep.base_url + path + ": " + httplib::to_string(err));
    }
    throw Error(ErrorCode::BackendUnavailable, ep.base_url + path + ": " + httplib::to_string(err));
  }
  if (res->status == 503) {
    throw Error(ErrorCode::BackendUnavailable, ep.base_url + path + " returned 503");
  }
  if (res->status != 200) {
    throw Error(ErrorCode::BackendUnavailable,
                ep.base_url + path + " returned " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    auto doc = json::parse(res->body);
    if (!doc.is_object()) throw Error(ErrorCode::BackendUnavailable, path + ": response is not an object");
    return doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, path + ": malformed response: " + e.what());
  }
}

// Retries transport failures; protocol violations are not retried.
json post(const HttpEndpoint& ep, const std::string& path, const json& body) {
  for (int attempt = 0;; ++attempt) {
    try {
      return post_once(ep, path, body);
    } catch (const Error& e) {
      const bool transient = e.code() == ErrorCode::Timeout || e.code() == ErrorCode::BackendUnavailable;
      if (!transient || attempt >= ep.retries) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
    }
  }
}

bool probe(const HttpEndpoint& ep) {
  try {
    HttpEndpoint quick = ep;
    quick.timeout = std::min(ep.timeout, std::chrono::milliseconds(2000));
    auto client = make_client(quick);
    auto res = client->Get("/v1/health");
    return static_cast<bool>(res);
  } catch (const Error&) {
    return false;
  }
}

[[noreturn]] void protocol_error(const std::string& what) {
  throw Error(ErrorCode::BackendUnavailable, "protocol violation: " + what);
}

}  // namespace

HttpGenerator::HttpGenerator(HttpEndpoint endpoint, bool supports_grammar, std::string backend_id)
    : endpoint_(std::move(endpoint)), supports_grammar_(supports_grammar), backend_id_(std::move(backend_id)) {}

GenerationResponse HttpGenerator::generate(const GenerationRequest& req) {
  check_request(req);
  if (req.grammar && !supports_grammar_) {
    throw Error(ErrorCode::GrammarUnsupported, backend_id_ + " does not support grammars");
  }
  json body{{"prompt", req.prompt},
            {"max_new_tokens", req.max_new_tokens},
            {"stop", req.stop_sequences},
            {"temperature", req.temperature}};
  if (req.grammar) body["grammar"] = *req.grammar;
  if (req.seed) body["seed"] = *req.seed;
  const json doc = post(endpoint_, "/v1/generate", body);
  if (!doc.contains("text") || !doc["text"].is_string()) protocol_error("/v1/generate lacks 'text'");
  GenerationResponse resp;
  resp.text = doc["text"].get<std::string>();
  try {
    resp.finish_reason = finish_reason_from_string(doc.value("finish_reason", std::string("stop")));
  } catch (const Error&) {
    protocol_error("/v1/generate finish_reason");
  }
  resp.backend_id = doc.value("backend_id", backend_id_);
  return resp;
}

bool HttpGenerator::reachable() { return probe(endpoint_); }

HttpEmbedder::HttpEmbedder(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::vector<EmbeddingVector> HttpEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(ErrorCode::InvalidArgument, "embed needs at least one text");
  const json doc = post(endpoint_, "/v1/embed", json{{"texts", texts}});
  if (!doc.contains("vectors") || !doc["vectors"].is_array()) protocol_error("/v1/embed lacks 'vectors'");
  const auto& vecs = doc["vectors"];
  if (vecs.size() != texts.size()) protocol_error("/v1/embed returned a different number of vectors");
  std::vector<EmbeddingVector> out;
  out.reserve(vecs.size());
  for (const auto& v : vecs) {
    if (!v.is_array() || v.empty()) protocol_error("/v1/embed vector is not a non-empty array");
    EmbeddingVector e;
    for (const auto& x : v) {
      if (!x.is_number()) protocol_error("/v1/embed vector holds a non-number");
      e.values.push_back(x.get<double>());
    }
    std::size_t expected = dim_.load();
    if (expected == 0) {
      dim_.compare_exchange_strong(expected, e.dim());
      expected = dim_.load();
    }
    if (e.dim() != expected) {
      throw Error(ErrorCode::DimensionMismatch, "/v1/embed dimension changed from " +
                                                    std::to_string(expected) + " to " +
                                                    std::to_string(e.dim()));
    }
    out.push_back(std::move(e));
  }
  return out;
}

bool HttpEmbedder::reachable() { return probe(endpoint_); }

HttpAttributor::HttpAttributor(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

AttributionResult HttpAttributor::attribute(const std::string& input, const std::string& target,
                                            const std::string& method) {
  const json doc = post(endpoint_, "/v1/attribute", json{{"input", input}, {"target", target}, {"method", method}});
  if (!doc.contains("tokens") || !doc["tokens"].is_array() || !doc.contains("scores") ||
      !doc["scores"].is_array()) {
    protocol_error("/v1/attribute lacks 'tokens' or 'scores'");
  }
  AttributionResult r;
  r.method = method;
  for (const auto& t : doc["tokens"]) {
    if (!t.is_string()) protocol_error("/v1/attribute token is not a string");
    r.tokens.push_back(t.get<std::string>());
  }
  for (const auto& s : doc["scores"]) {
    if (!s.is_number() || !std::isfinite(s.get<double>())) protocol_error("/v1/attribute score is not finite");
    r.scores.push_back(s.get<double>());
  }
  if (r.tokens.size() != r.scores.size()) protocol_error("/v1/attribute token/score length mismatch");
  return r;
}

bool HttpAttributor::reachable() { return probe(endpoint_); }

}  // namespace xaichat
