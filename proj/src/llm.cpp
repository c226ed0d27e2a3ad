#include "masattr/llm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace masattr::llm {

using nlohmann::json;

void ModelEndpoint::validate() const {
  if (base_url.empty()) throw LlmConfigError("endpoint base_url is empty");
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0)
    throw LlmConfigError("endpoint base_url must start with http:// or https://");
  if (model.empty()) throw LlmConfigError("endpoint model is empty");
  if (api_key_env.empty()) throw LlmConfigError("endpoint api_key_env is empty");
  if (!(timeout_s > 0.0)) throw LlmConfigError("endpoint timeout must be positive");
  if (max_retries < 0) throw LlmConfigError("endpoint max_retries must be non-negative");
  if (max_concurrency < 1 || max_concurrency > 1024)
    throw LlmConfigError("endpoint max_concurrency must be in [1, 1024]");
  if (!std::isfinite(temperature) || temperature < 0.0)
    throw LlmConfigError("endpoint temperature must be a non-negative number");
}

ChatClient::ChatClient(ModelEndpoint endpoint)
    : endpoint_(std::move(endpoint)), slots_(0) {
  endpoint_.validate();
  const auto scheme_end = endpoint_.base_url.find("://") + 3;
  const auto path_start = endpoint_.base_url.find('/', scheme_end);
  scheme_host_port_ = endpoint_.base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : endpoint_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  slots_.release(endpoint_.max_concurrency);
}

std::string chat_request_body(const std::string& model, const std::vector<ChatMessage>& messages,
                              double temperature) {
  json body;
  body["model"] = model;
  body["messages"] = json::array();
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  body["temperature"] = temperature;
  return body.dump();
}

ChatReply parse_chat_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ResponseFormatError(std::string("chat response is not JSON: ") + e.what());
  }
  try {
    ChatReply r;
    r.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    const auto& usage = j.at("usage");
    r.prompt_tokens = usage.at("prompt_tokens").get<std::int64_t>();
    r.completion_tokens = usage.at("completion_tokens").get<std::int64_t>();
    if (r.prompt_tokens < 0 || r.completion_tokens < 0)
      throw ResponseFormatError("chat response reports negative token usage");
    if (j.contains("model") && j["model"].is_string()) r.model = j["model"].get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ResponseFormatError(std::string("chat response missing fields: ") + e.what());
  }
}

void ChatClient::record(RequestRecord r) const {
  std::lock_guard lock(log_mu_);
  log_.push_back(std::move(r));
}

std::vector<RequestRecord> ChatClient::requests() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

namespace {

struct SlotGuard {
  std::counting_semaphore<1024>& sem;
  explicit SlotGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
};

std::chrono::milliseconds backoff_for(const ModelEndpoint& ep, int attempt) {
  auto delay = ep.backoff_base * (std::int64_t{1} << std::min(attempt - 1, 20));
  return std::min(delay, ep.backoff_cap);
}

}  // namespace

ChatReply ChatClient::chat(const std::vector<ChatMessage>& messages) const {
  const char* key = std::getenv(endpoint_.api_key_env.c_str());
  if (key == nullptr || *key == '\0')
    throw LlmConfigError("environment variable " + endpoint_.api_key_env + " is not set");

  const std::string body = chat_request_body(endpoint_.model, messages, endpoint_.temperature);
  const std::string path = path_prefix_ + "/chat/completions";
  const httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
  const auto timeout = std::chrono::duration<double>(endpoint_.timeout_s);
  const auto secs = static_cast<time_t>(timeout.count());
  const auto usecs = static_cast<time_t>((timeout.count() - static_cast<double>(secs)) * 1e6);

  const int attempts = endpoint_.max_retries + 1;
  std::exception_ptr last;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    std::chrono::milliseconds wait{0};
    {
      SlotGuard slot(slots_);
      httplib::Client cli(scheme_host_port_);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      auto res = cli.Post(path, headers, body, "application/json");

      if (!res) {
        record({endpoint_.model, attempt, 0, 0, 0});
        const auto err = res.error();
        const std::string what = "request to " + scheme_host_port_ + " failed: " + httplib::to_string(err);
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
          last = std::make_exception_ptr(TimeoutError(what));
        else
          last = std::make_exception_ptr(HttpError(0, what));
        wait = backoff_for(endpoint_, attempt);
      } else if (res->status == 200) {
        ChatReply reply;
        try {
          reply = parse_chat_response(res->body);
        } catch (...) {
          record({endpoint_.model, attempt, res->status, 0, 0});
          throw;
        }
        if (reply.model.empty()) reply.model = endpoint_.model;
        record({endpoint_.model, attempt, res->status, reply.prompt_tokens, reply.completion_tokens});
        return reply;
      } else {
        const int status = res->status;
        record({endpoint_.model, attempt, status, 0, 0});
        const std::string what = "chat endpoint returned HTTP " + std::to_string(status);
        if (status == 401 || status == 403) throw AuthError(what + " (check " + endpoint_.api_key_env + ")");
        if (status == 429) {
          last = std::make_exception_ptr(RateLimitError(what));
          wait = backoff_for(endpoint_, attempt);
          if (res->has_header("Retry-After")) {
            try {
              const double s = std::stod(res->get_header_value("Retry-After"));
              if (s >= 0)
                wait = std::min(std::chrono::milliseconds(static_cast<std::int64_t>(s * 1000.0)),
                                endpoint_.backoff_cap);
            } catch (const std::exception&) {
              // HTTP-date form; fall back to exponential backoff
            }
          }
        } else if (status >= 500 || status == 408) {
          last = std::make_exception_ptr(HttpError(status, what));
          wait = backoff_for(endpoint_, attempt);
        } else {
          throw HttpError(status, what + ": " + res->body.substr(0, 200));
        }
      }
    }
    if (attempt < attempts) std::this_thread::sleep_for(wait);
  }
  std::rethrow_exception(last);
}

PricingTable::PricingTable(std::map<std::string, Price> per_model) : per_model_(std::move(per_model)) {
  for (const auto& [model, p] : per_model_)
    if (!(p.prompt_per_1k >= 0.0) || !(p.completion_per_1k >= 0.0) || !std::isfinite(p.prompt_per_1k) ||
        !std::isfinite(p.completion_per_1k))
      throw std::invalid_argument("price for '" + model + "' must be a non-negative number");
}

std::vector<std::string> PricingTable::models() const {
  std::vector<std::string> out;
  for (const auto& [m, _] : per_model_) out.push_back(m);
  return out;
}

const Price& PricingTable::at(const std::string& model) const {
  auto it = per_model_.find(model);
  if (it == per_model_.end()) {
    std::string known;
    for (const auto& [m, _] : per_model_) known += (known.empty() ? "" : ", ") + m;
    throw std::out_of_range("model '" + model + "' is not in the pricing table (known: " +
                            (known.empty() ? "none" : known) + ")");
  }
  return it->second;
}

double price(std::int64_t prompt_tokens, std::int64_t completion_tokens, const std::string& model,
             const PricingTable& table) {
  const auto& p = table.at(model);
  return static_cast<double>(prompt_tokens) * p.prompt_per_1k / 1000.0 +
         static_cast<double>(completion_tokens) * p.completion_per_1k / 1000.0;
}

const char* const kJudgeSystemPrompt =
    "You are a counterfactual evaluator for a multi-agent system. Given the task, the lead "
    "orchestrator's transcript, and each sub-agent's contribution, decide whether the task would "
    "still succeed if a specified subset of agents were ignored.";

namespace {

std::string id_list(const std::vector<AgentIndex>& ids) {
  if (ids.empty()) return "none";
  std::string out;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (k) out += ", ";
    out += std::to_string(ids[k]);
  }
  return out;
}

const char* label_of(const Coalition& active, AgentIndex i) { return active.contains(i) ? "ACTIVE" : "ABLATED"; }

}  // namespace

std::vector<ChatMessage> render_judge_prompt(const std::string& task,
                                             const std::vector<AgentTranscript>& transcripts,
                                             const Coalition& active, std::optional<AgentIndex> lead) {
  const std::size_t n = active.width();
  std::vector<const AgentTranscript*> by_slot(n, nullptr);
  for (const auto& t : transcripts) {
    if (t.agent.index >= n)
      throw std::out_of_range("transcript for agent " + std::to_string(t.agent.index) + " is out of range");
    by_slot[t.agent.index] = &t;
  }
  for (AgentIndex i = 0; i < n; ++i)
    if (by_slot[i] == nullptr) throw std::invalid_argument("missing transcript for agent " + std::to_string(i));
  if (lead && *lead >= n) throw std::out_of_range("lead agent out of range");

  std::ostringstream u;
  u << "Task: " << task << "\n";
  if (lead) u << "Lead transcript [" << label_of(active, *lead) << "]: " << by_slot[*lead]->text << "\n";
  u << "Per-agent transcripts:\n";
  for (AgentIndex i = 0; i < n; ++i) {
    if (lead && i == *lead) continue;
    u << "- Agent " << i << " (" << by_slot[i]->agent.label << ") [" << label_of(active, i)
      << "]: " << by_slot[i]->text << "\n";
  }
  u << "Instruction: disregard agents " << id_list(active.complement().members()) << "; consider only "
    << id_list(active.members()) << ".\n";
  u << "Counterfactually, would the task succeed using only the active agents?\n";
  u << "Reply as JSON: {\"success\": 0/1, \"reasoning\": \"...\"}.";
  return {{"system", kJudgeSystemPrompt}, {"user", u.str()}};
}

std::optional<JudgeVerdict> parse_judge_verdict(const std::string& reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  const json j = json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto s = j.find("success");
  auto r = j.find("reasoning");
  if (s == j.end() || r == j.end() || !r->is_string()) return std::nullopt;
  if (!s->is_number_integer()) return std::nullopt;
  const auto v = s->get<std::int64_t>();
  if (v != 0 && v != 1) return std::nullopt;
  return JudgeVerdict{static_cast<int>(v), r->get<std::string>()};
}

}  // namespace masattr::llm
