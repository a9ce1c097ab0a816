/**
 * Copyright 2026 The LGNet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Local chat-completion server for client tests (test-only).
#pragma once

#include "lgnet/vlm.hpp"

#include "httplib.h"
#include "json.hpp"

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace lgnet::testing {

inline std::string chat_reply(const std::string& text) {
  return nlohmann::json{{"model", "mock-vlm"},
                        {"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                        {"usage", {{"completion_tokens", 7}}}}
      .dump();
}

/// Serves POST /v1/chat/completions through a caller-provided handler and
/// tracks peak concurrency.
class MockVLMServer {
 public:
  using Handler = std::function<void(int call, const httplib::Request&, httplib::Response&)>;

  explicit MockVLMServer(Handler handler, int delay_ms = 0) : handler_(std::move(handler)), delay_ms_(delay_ms) {
    server_.new_task_queue = [] { return new httplib::ThreadPool(16); };
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      int peak = peak_.load();
      while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
      }
      if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
      const int call = ++calls_;
      {
        std::lock_guard lock(mutex_);
        bodies_.push_back(req.body);
      }
      handler_(call, req, res);
      --in_flight_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockVLMServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  int calls() const { return calls_; }
  int peak_in_flight() const { return peak_; }
  std::vector<std::string> bodies() const {
    std::lock_guard lock(mutex_);
    return bodies_;
  }

 private:
  httplib::Server server_;
  Handler handler_;
  int delay_ms_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> in_flight_{0}, peak_{0}, calls_{0};
  mutable std::mutex mutex_;
  std::vector<std::string> bodies_;
};

inline HttpClientConfig mock_config(const MockVLMServer& server) {
  HttpClientConfig c;
  c.endpoint = server.endpoint();
  c.api_key_env = "LGNET_TEST_UNSET_KEY";
  c.model_id = "mock-vlm";
  c.initial_backoff_ms = 1;
  c.max_backoff_ms = 4;
  c.timeout_s = 5;
  return c;
}

}  // namespace lgnet::testing
