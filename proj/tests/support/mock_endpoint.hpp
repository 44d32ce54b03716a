// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// A chat-completion endpoint on a loopback port for judge tests.

#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "tommer/judge.hpp"

namespace tommer::testing {

class MockEndpoint {
 public:
  using json = nlohmann::json;
  /// Maps a request body to (status, assistant text). Non-200 statuses send
  /// the text as a plain body.
  using Reply = std::function<std::pair<int, std::string>(const json& request)>;

  explicit MockEndpoint(Reply reply) : reply_(std::move(reply)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      {
        std::lock_guard lock(mu_);
        auth_ = req.get_header_value("Authorization");
      }
      const auto [status, text] = reply_(json::parse(req.body));
      res.status = status;
      if (status == 200) {
        const json body = {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}})}};
        res.set_content(body.dump(), "application/json");
      } else {
        res.set_content(text, "text/plain");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockEndpoint() {
    server_.stop();
    thread_.join();
  }

  MockEndpoint(const MockEndpoint&) = delete;
  MockEndpoint& operator=(const MockEndpoint&) = delete;

  /// Client settings aimed at this endpoint, with millisecond backoff.
  JudgeClientConfig config() const {
    using namespace std::chrono_literals;
    JudgeClientConfig c;
    c.base_url = url();
    c.model = "mock-judge";
    c.api_key = "test-key";
    c.initial_backoff = 1ms;
    c.timeout = 5s;
    c.concurrency = 1;
    return c;
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int requests() const { return requests_; }
  std::string last_auth() {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  Reply reply_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> requests_{0};
  std::mutex mu_;
  std::string auth_;
};

/// Replies in order from a fixed script, then keeps repeating the last entry.
inline MockEndpoint::Reply scripted(std::vector<std::pair<int, std::string>> script) {
  auto state = std::make_shared<std::pair<std::mutex, std::deque<std::pair<int, std::string>>>>();
  state->second.assign(script.begin(), script.end());
  return [state](const nlohmann::json&) {
    std::lock_guard lock(state->first);
    auto next = state->second.front();
    if (state->second.size() > 1) state->second.pop_front();
    return next;
  };
}

}  // namespace tommer::testing
