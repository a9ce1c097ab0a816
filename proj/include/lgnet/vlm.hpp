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

// Vision-language model clients for description generation. The HTTP client
// speaks through an adapter so different provider request shapes plug in.

#pragma once

#include "lgnet/datagen.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgnet {

struct VLMResponse {
  std::string text;
  int token_count = 0;
  double latency_ms = 0;
  std::string model_id;
  bool refused = false;
  int attempts = 1;
};

/// No usable response after the retry budget (connection failures, 5xx, 429).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The server answered but the reply cannot be used (bad JSON, missing text,
/// non-retryable status).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Case-insensitive substring match against known refusal phrases.
class RefusalDetector {
 public:
  RefusalDetector();
  explicit RefusalDetector(std::vector<std::string> phrases);

  bool operator()(std::string_view text) const;
  const std::vector<std::string>& phrases() const { return phrases_; }

 private:
  std::vector<std::string> phrases_;
};

class VLMClient {
 public:
  virtual ~VLMClient() = default;
  /// Must be safe to call from several threads at once.
  virtual VLMResponse complete(const PromptPayload& payload) = 0;
  virtual std::string model_id() const = 0;
};

/// Provider request/response shape.
class ChatAdapter {
 public:
  virtual ~ChatAdapter() = default;
  virtual std::string build_body(const PromptPayload& payload, const std::string& model, int max_tokens) const = 0;
  /// Auth and version headers for an API key.
  virtual std::map<std::string, std::string> headers(const std::string& api_key) const = 0;
  /// Throws ProtocolError when the body lacks reply text.
  virtual VLMResponse parse_reply(const std::string& body) const = 0;
};

/// {model, messages: [{role, content: [{type: text|image_url, ...}]}]}
class ChatCompletionAdapter : public ChatAdapter {
 public:
  std::string build_body(const PromptPayload& payload, const std::string& model, int max_tokens) const override;
  std::map<std::string, std::string> headers(const std::string& api_key) const override;
  VLMResponse parse_reply(const std::string& body) const override;
};

/// Messages API with a top-level system field and base64 image blocks.
class AnthropicMessagesAdapter : public ChatAdapter {
 public:
  std::string build_body(const PromptPayload& payload, const std::string& model, int max_tokens) const override;
  std::map<std::string, std::string> headers(const std::string& api_key) const override;
  VLMResponse parse_reply(const std::string& body) const override;
};

std::unique_ptr<ChatAdapter> make_adapter(std::string_view name);

struct HttpClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string model_id = "gpt-4o";
  std::string adapter = "chat_completion";
  int max_tokens = 300;
  int max_retries = 3;  // retries after the first attempt
  double initial_backoff_ms = 500;
  double max_backoff_ms = 8000;
  double timeout_s = 60;
};

class HttpVLMClient : public VLMClient {
 public:
  /// Reads the API key from `config.api_key_env`; an unset variable sends no key.
  explicit HttpVLMClient(HttpClientConfig config, std::unique_ptr<ChatAdapter> adapter = nullptr);

  VLMResponse complete(const PromptPayload& payload) override;
  std::string model_id() const override { return config_.model_id; }

 private:
  HttpClientConfig config_;
  std::unique_ptr<ChatAdapter> adapter_;
  std::string api_key_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Offline client: a templated positional sentence picked by a hash of the
/// seed and payload, so equal inputs always give equal text.
class StubVLMClient : public VLMClient {
 public:
  explicit StubVLMClient(std::uint64_t seed = 0) : seed_(seed) {}

  VLMResponse complete(const PromptPayload& payload) override;
  std::string model_id() const override { return "stub"; }

 private:
  std::uint64_t seed_;
};

/// One request with refusal marking.
VLMResponse request_description(VLMClient& client, const PromptPayload& payload,
                                const RefusalDetector& refusals = RefusalDetector());

struct BatchOptions {
  int max_in_flight = 4;
  double min_interval_ms = 0;  // spacing between request starts
};

struct BatchItem {
  std::optional<VLMResponse> response;
  std::string error;  // set when the request failed
};

/// Runs every payload with at most `max_in_flight` concurrent requests.
/// Results keep input order; failures are captured per item.
std::vector<BatchItem> request_descriptions(VLMClient& client, const std::vector<PromptPayload>& payloads,
                                            const BatchOptions& options = {},
                                            const RefusalDetector& refusals = RefusalDetector());

}  // namespace lgnet
