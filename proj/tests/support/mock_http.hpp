#pragma once

// In-process HTTP server for exercising the chat-completion and embedder
// clients without any network dependency.

#include <functional>
#include <string>
#include <thread>

#include <httplib.h>

namespace testsupport {

class MockServer {
 public:
  explicit MockServer(
      const std::function<void(httplib::Server&)>& setup) {
    setup(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

inline std::string chat_body(const std::string& content) {
  nlohmann::json j{
      {"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
  return j.dump();
}

}  // namespace testsupport
