#pragma once

#include <json.hpp>
#include <memory>
#include <string>

#include "xaichat/config.hpp"
#include "xaichat/dialogue.hpp"
#include "xaichat/errors.hpp"

namespace httplib {
class Server;
}

namespace xaichat {

// HTTP status for an error code: 404 for unknown things, 503 for backend failures, 400 otherwise.
int http_status(ErrorCode code);

// {"error": {"code": "NOT_FOUND", "message": ...}} plus optional extra fields.
nlohmann::ordered_json error_body(ErrorCode code, const std::string& message);

// JSON body of the turn endpoint.
nlohmann::ordered_json turn_json(const Turn& turn, std::size_t index);

// The /api/* surface over a session store (docs/api.md).
class ApiServer {
 public:
  explicit ApiServer(Runtime runtime);
  ~ApiServer();

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Binds and serves until stop(). Returns false when the address cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port; serve with listen_after_bind(). Returns the port or -1.
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  // Stops accepting and waits for in-flight requests.
  void stop();
  [[nodiscard]] bool running() const;

  [[nodiscard]] SessionStore& sessions() noexcept { return *store_; }
  [[nodiscard]] const Runtime& runtime() const noexcept { return runtime_; }
  // Health document served at /api/health.
  [[nodiscard]] nlohmann::ordered_json health() const;

 private:
  void install_routes();

  Runtime runtime_;
  std::unique_ptr<SessionStore> store_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace xaichat
