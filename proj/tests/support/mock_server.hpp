#pragma once

#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace tagcc::testing {

// Local HTTP endpoint for client tests. Handlers run on the server thread;
// received bodies are recorded for assertions.
class MockServer {
 public:
  using Handler = std::function<nlohmann::json(const nlohmann::json& body)>;

  explicit MockServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/endpoint", [this](const httplib::Request& req,
                                        httplib::Response& res) {
      nlohmann::json body = nlohmann::json::parse(req.body);
      {
        std::lock_guard lock(mutex_);
        requests_.push_back(body);
      }
      try {
        res.set_content(handler_(body).dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(e.what(), "text/plain");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this]() { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/endpoint";
  }

  std::vector<nlohmann::json> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  mutable std::vector<nlohmann::json> requests_;
};

inline nlohmann::json chat_reply(const std::string& content) {
  return {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
}

}  // namespace tagcc::testing
