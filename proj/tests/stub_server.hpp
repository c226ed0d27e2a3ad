#pragma once

#include <chrono>
#include <deque>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

namespace masattr::testing {

struct StubResponse {
  int status = 200;
  std::string body;
  httplib::Headers headers;
  int delay_ms = 0;
};

inline std::string completion_body(const std::string& text, int prompt_tokens, int completion_tokens,
                                   const std::string& model = "stub-model") {
  nlohmann::json j;
  j["model"] = model;
  j["choices"] = {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}}};
  j["usage"] = {{"prompt_tokens", prompt_tokens}, {"completion_tokens", completion_tokens}};
  return j.dump();
}

// Local chat-completions endpoint replaying a scripted list of responses;
// once the script runs out it answers 200 with the last scripted body.
class StubServer {
 public:
  explicit StubServer(std::vector<StubResponse> script) : script_(script.begin(), script.end()) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      StubResponse r;
      {
        std::lock_guard lock(mu_);
        bodies_.push_back(req.body);
        auth_.push_back(req.get_header_value("Authorization"));
        r = last_;
        if (!script_.empty()) {
          r = script_.front();
          script_.pop_front();
          if (r.status == 200) last_ = r;
        }
      }
      if (r.delay_ms) std::this_thread::sleep_for(std::chrono::milliseconds(r.delay_ms));
      res.status = r.status;
      for (const auto& [k, v] : r.headers) res.set_header(k, v);
      res.set_content(r.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::size_t hits() const {
    std::lock_guard lock(mu_);
    return bodies_.size();
  }
  std::vector<std::string> bodies() const {
    std::lock_guard lock(mu_);
    return bodies_;
  }
  std::vector<std::string> auth_headers() const {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::deque<StubResponse> script_;
  StubResponse last_{200, completion_body("ok", 1, 1), {}};
  std::vector<std::string> bodies_;
  std::vector<std::string> auth_;
};

}  // namespace masattr::testing
