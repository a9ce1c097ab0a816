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

#include "lgnet/vlm.hpp"

// after Eigen: <resolv.h> defines a `_res` macro that breaks Eigen's headers
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <random>
#include <thread>

namespace lgnet {

using json = nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string data_url(const std::string& b64) { return "data:image/png;base64," + b64; }

}  // namespace

RefusalDetector::RefusalDetector()
    : RefusalDetector({"unable to do this task", "I am unable to", "I'm unable to", "I cannot assist with",
                       "I can't assist with"}) {}

RefusalDetector::RefusalDetector(std::vector<std::string> phrases) {
  for (auto& p : phrases) phrases_.push_back(lower(p));
}

bool RefusalDetector::operator()(std::string_view text) const {
  const std::string t = lower(text);
  for (const auto& p : phrases_)
    if (t.find(p) != std::string::npos) return true;
  return false;
}

std::string ChatCompletionAdapter::build_body(const PromptPayload& payload, const std::string& model,
                                              int max_tokens) const {
  auto user_turn = [](const std::string& text, const std::string& b64) {
    return json{{"role", "user"},
                {"content", json::array({{{"type", "text"}, {"text", text}},
                                         {{"type", "image_url"}, {"image_url", {{"url", data_url(b64)}}}}})}};
  };
  json messages = json::array();
  if (!payload.system_role.empty())
    messages.push_back({{"role", "system"}, {"content", json::array({{{"type", "text"}, {"text", payload.system_role}}})}});
  for (const auto& ex : payload.few_shot_examples) {
    messages.push_back(user_turn(payload.task_text, ex.image_b64));
    messages.push_back({{"role", "assistant"}, {"content", json::array({{{"type", "text"}, {"text", ex.description}}})}});
  }
  messages.push_back(user_turn(payload.task_text, payload.image_b64));
  return json{{"model", model}, {"max_tokens", max_tokens}, {"messages", messages}}.dump();
}

std::map<std::string, std::string> ChatCompletionAdapter::headers(const std::string& api_key) const {
  if (api_key.empty()) return {};
  return {{"Authorization", "Bearer " + api_key}};
}

VLMResponse ChatCompletionAdapter::parse_reply(const std::string& body) const {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("chat completion reply is not JSON: ") + e.what());
  }
  VLMResponse r;
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) {
      r.text = content.get<std::string>();
    } else {
      for (const auto& part : content)
        if (part.value("type", "") == "text") r.text += part.at("text").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("chat completion reply has no message content: ") + e.what());
  }
  if (j.contains("usage")) r.token_count = j["usage"].value("completion_tokens", j["usage"].value("total_tokens", 0));
  r.model_id = j.value("model", "");
  return r;
}

std::string AnthropicMessagesAdapter::build_body(const PromptPayload& payload, const std::string& model,
                                                 int max_tokens) const {
  auto user_turn = [](const std::string& text, const std::string& b64) {
    return json{{"role", "user"},
                {"content", json::array({{{"type", "image"},
                                          {"source", {{"type", "base64"}, {"media_type", "image/png"}, {"data", b64}}}},
                                         {{"type", "text"}, {"text", text}}})}};
  };
  json messages = json::array();
  for (const auto& ex : payload.few_shot_examples) {
    messages.push_back(user_turn(payload.task_text, ex.image_b64));
    messages.push_back({{"role", "assistant"}, {"content", ex.description}});
  }
  messages.push_back(user_turn(payload.task_text, payload.image_b64));
  json body{{"model", model}, {"max_tokens", max_tokens}, {"messages", messages}};
  if (!payload.system_role.empty()) body["system"] = payload.system_role;
  return body.dump();
}

std::map<std::string, std::string> AnthropicMessagesAdapter::headers(const std::string& api_key) const {
  std::map<std::string, std::string> h{{"anthropic-version", "2023-06-01"}};
  if (!api_key.empty()) h["x-api-key"] = api_key;
  return h;
}

VLMResponse AnthropicMessagesAdapter::parse_reply(const std::string& body) const {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("messages reply is not JSON: ") + e.what());
  }
  VLMResponse r;
  try {
    for (const auto& part : j.at("content"))
      if (part.value("type", "") == "text") r.text += part.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("messages reply has no content: ") + e.what());
  }
  if (j.contains("usage")) r.token_count = j["usage"].value("output_tokens", 0);
  r.model_id = j.value("model", "");
  return r;
}

std::unique_ptr<ChatAdapter> make_adapter(std::string_view name) {
  if (name == "chat_completion" || name == "openai") return std::make_unique<ChatCompletionAdapter>();
  if (name == "anthropic") return std::make_unique<AnthropicMessagesAdapter>();
  throw std::invalid_argument("unknown VLM adapter '" + std::string(name) + "'");
}

HttpVLMClient::HttpVLMClient(HttpClientConfig config, std::unique_ptr<ChatAdapter> adapter)
    : config_(std::move(config)), adapter_(adapter ? std::move(adapter) : make_adapter(config_.adapter)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("VLM endpoint must include a scheme: " + config_.endpoint);
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
  if (!config_.api_key_env.empty())
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

VLMResponse HttpVLMClient::complete(const PromptPayload& payload) {
  const std::string body = adapter_->build_body(payload, config_.model_id, config_.max_tokens);
  httplib::Headers headers;
  for (const auto& [k, v] : adapter_->headers(api_key_)) headers.emplace(k, v);

  httplib::Client cli(scheme_host_port_);
  const auto timeout = std::chrono::duration<double>(config_.timeout_s);
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  std::string last;
  double backoff = config_.initial_backoff_ms;
  const auto start = std::chrono::steady_clock::now();
  for (int attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff));
      backoff = std::min(backoff * 2, config_.max_backoff_ms);
    }
    auto res = cli.Post(path_, headers, body, "application/json");
    if (!res) {
      last = "request failed: " + httplib::to_string(res.error());
      warn("VLM " + last + " (attempt " + std::to_string(attempt) + ")");
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last = "HTTP " + std::to_string(res->status);
      warn("VLM " + last + " (attempt " + std::to_string(attempt) + ")");
      continue;
    }
    if (res->status != 200)
      throw ProtocolError("VLM endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    VLMResponse r = adapter_->parse_reply(res->body);
    r.attempts = attempt;
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (r.model_id.empty()) r.model_id = config_.model_id;
    return r;
  }
  throw TransportError("VLM request failed after " + std::to_string(config_.max_retries + 1) + " attempts: " + last);
}

VLMResponse StubVLMClient::complete(const PromptPayload& payload) {
  static const char* regions[] = {"upper left", "upper right", "lower left", "lower right", "center",
                                  "upper",      "lower",       "left",       "right"};
  static const char* cues[] = {"a faint warm spot", "a small bright point", "a compact heat signature"};
  static const char* scenes[] = {"a cluttered sky background", "a uniform background", "scattered clouds"};
  const std::size_t h = std::hash<std::string>{}(payload.image_b64 + '\x1f' + payload.task_text) ^
                        static_cast<std::size_t>(seed_ * 0x9E3779B97F4A7C15ull);
  std::mt19937_64 rng(h);
  auto pick = [&](auto& arr) { return arr[rng() % std::size(arr)]; };
  VLMResponse r;
  r.text = std::string("The small target appears as ") + pick(cues) + " in the " + pick(regions) +
           " region of the image, set against " + pick(scenes) + ".";
  r.token_count = count_words(r.text);
  r.model_id = model_id();
  return r;
}

VLMResponse request_description(VLMClient& client, const PromptPayload& payload, const RefusalDetector& refusals) {
  VLMResponse r = client.complete(payload);
  r.refused = refusals(r.text);
  return r;
}

std::vector<BatchItem> request_descriptions(VLMClient& client, const std::vector<PromptPayload>& payloads,
                                            const BatchOptions& options, const RefusalDetector& refusals) {
  if (options.max_in_flight < 1) throw std::invalid_argument("request_descriptions: max_in_flight must be >= 1");
  std::vector<BatchItem> out(payloads.size());
  std::atomic<std::size_t> next{0};
  std::mutex pace;
  auto next_start = std::chrono::steady_clock::now();
  auto worker = [&] {
    for (std::size_t i = next++; i < payloads.size(); i = next++) {
      if (options.min_interval_ms > 0) {
        std::unique_lock lock(pace);
        const auto now = std::chrono::steady_clock::now();
        const auto slot = std::max(now, next_start);
        next_start = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                std::chrono::duration<double, std::milli>(options.min_interval_ms));
        lock.unlock();
        std::this_thread::sleep_until(slot);
      }
      try {
        out[i].response = request_description(client, payloads[i], refusals);
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(options.max_in_flight), payloads.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return out;
}

}  // namespace lgnet
