#pragma once

#include <httplib.h>

#include <json.hpp>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

// In-process stand-in for an external inference server speaking the /v1 protocol.
class FakeV1Server {
 public:
  using Handler = std::function<void(const nlohmann::json&, httplib::Response&)>;

  FakeV1Server() {
    auto bind = [this](const std::string& path) {
      server_.Post(path, [this, path](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
        Handler h;
        {
          std::lock_guard lock(mu_);
          requests_.push_back({path, body});
          h = handlers_[path];
        }
        if (!h) {
          res.status = 404;
          return;
        }
        h(body, res);
      });
    };
    bind("/v1/generate");
    bind("/v1/embed");
    bind("/v1/attribute");
    server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"ok\":true}", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeV1Server() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  void on(const std::string& path, Handler h) {
    std::lock_guard lock(mu_);
    handlers_[path] = std::move(h);
  }

  [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  struct Seen {
    std::string path;
    nlohmann::json body;
  };

  std::vector<Seen> requests() {
    std::lock_guard lock(mu_);
    return requests_;
  }

  static void reply(httplib::Response& res, const nlohmann::json& doc) {
    res.set_content(doc.dump(), "application/json");
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::map<std::string, Handler> handlers_;
  std::vector<Seen> requests_;
};
