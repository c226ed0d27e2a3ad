#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include "masattr/coalition.hpp"
#include "masattr/game.hpp"

namespace masattr::llm {

// Transport and protocol failures are typed so callers can tell a bad key
// from an overloaded server.
class LlmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class LlmConfigError : public LlmError {
 public:
  using LlmError::LlmError;
};
class AuthError : public LlmError {
 public:
  using LlmError::LlmError;
};
class TimeoutError : public LlmError {
 public:
  using LlmError::LlmError;
};
class RateLimitError : public LlmError {
 public:
  using LlmError::LlmError;
};
class HttpError : public LlmError {
 public:
  HttpError(int status, const std::string& what) : LlmError(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};
class ResponseFormatError : public LlmError {
 public:
  using LlmError::LlmError;
};

struct ChatMessage {
  std::string role;
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatReply {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::string model;
};

// Anything that answers a chat: the HTTP client, or a stub in tests.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatReply chat(const std::vector<ChatMessage>& messages) const = 0;
  virtual std::string model() const = 0;
};

struct ModelEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8080/v1
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  int max_concurrency = 4;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{30000};

  void validate() const;
};

struct RequestRecord {
  std::string model;
  int attempt = 0;  // 1-based
  int status = 0;   // HTTP status, 0 on transport failure
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

// OpenAI-compatible chat-completions client. Shareable across threads; at
// most `max_concurrency` requests are in flight at once.
class ChatClient final : public ChatBackend {
 public:
  explicit ChatClient(ModelEndpoint endpoint);

  ChatReply chat(const std::vector<ChatMessage>& messages) const override;
  std::string model() const override { return endpoint_.model; }

  // Every HTTP attempt, appended before chat() returns.
  std::vector<RequestRecord> requests() const;
  const ModelEndpoint& endpoint() const { return endpoint_; }

 private:
  void record(RequestRecord r) const;

  ModelEndpoint endpoint_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  mutable std::counting_semaphore<1024> slots_;
  mutable std::mutex log_mu_;
  mutable std::vector<RequestRecord> log_;
};

// Builds the request body {model, messages, temperature}.
std::string chat_request_body(const std::string& model, const std::vector<ChatMessage>& messages,
                              double temperature);

// Parses choices[0].message.content and usage.{prompt,completion}_tokens.
ChatReply parse_chat_response(const std::string& body);

struct Price {
  double prompt_per_1k = 0.0;
  double completion_per_1k = 0.0;
};

class PricingTable {
 public:
  PricingTable() = default;
  explicit PricingTable(std::map<std::string, Price> per_model);

  bool contains(const std::string& model) const { return per_model_.contains(model); }
  const Price& at(const std::string& model) const;
  std::vector<std::string> models() const;

 private:
  std::map<std::string, Price> per_model_;
};

double price(std::int64_t prompt_tokens, std::int64_t completion_tokens, const std::string& model,
             const PricingTable& table);

struct AgentTranscript {
  AgentId agent;
  std::string text;
};

extern const char* const kJudgeSystemPrompt;

// Judge prompt for one task. `active` marks which agents stay; the lead
// (orchestrator) transcript, when given, is rendered on its own line.
std::vector<ChatMessage> render_judge_prompt(const std::string& task,
                                             const std::vector<AgentTranscript>& transcripts,
                                             const Coalition& active,
                                             std::optional<AgentIndex> lead = std::nullopt);

struct JudgeVerdict {
  int success = 0;
  std::string reasoning;
};

// Accepts a bare JSON object or one wrapped in prose / code fences. Returns
// nullopt unless it finds {"success": 0|1, "reasoning": "<string>"}.
std::optional<JudgeVerdict> parse_judge_verdict(const std::string& reply);

}  // namespace masattr::llm
