#include "masattr/protocols.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "masattr/digest.hpp"
#include "masattr/errors.hpp"

namespace masattr {

ExecutabilityPolicy ExecutabilityPolicy::baseline(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("baseline policy value must be finite");
  return {Mode::baseline, v};
}

std::string ExecutabilityPolicy::describe() const {
  switch (mode) {
    case Mode::zero_utility: return "zero_utility";
    case Mode::skip_with_error: return "skip_with_error";
    case Mode::baseline: {
      std::ostringstream os;
      os.precision(17);
      os << "baseline(" << value << ")";
      return os.str();
    }
  }
  return "unknown";
}

ProtocolVector make_ablation_protocol(const Game& game) {
  return ProtocolVector(std::vector<RoleProtocol>(game.size(), RoleProtocol::null_ablation()));
}

ProtocolVector make_introspective_protocol(const Game& game) {
  return ProtocolVector(std::vector<RoleProtocol>(game.size(), RoleProtocol::simulated_null()));
}

ProtocolVector make_replacement_protocol(const Game& game, const std::map<AgentIndex, std::string>& substitutes,
                                         std::optional<std::string> shared_default) {
  std::vector<RoleProtocol> roles;
  roles.reserve(game.size());
  for (const auto& [i, _] : substitutes)
    if (i >= game.size()) throw std::out_of_range("substitute given for unknown agent " + std::to_string(i));
  for (AgentIndex i = 0; i < game.size(); ++i) {
    if (auto it = substitutes.find(i); it != substitutes.end()) {
      roles.push_back(RoleProtocol::replacement(it->second));
    } else if (shared_default) {
      roles.push_back(RoleProtocol::replacement(*shared_default));
    } else {
      throw std::invalid_argument("no substitute for agent " + std::to_string(i) + " (" + game.agents[i].label +
                                  ") and no shared default");
    }
  }
  return ProtocolVector(std::move(roles));
}

bool is_executable(const Game& game, const Coalition& coalition, const ProtocolVector& protocol) {
  for (auto role : game.topology.required_roles())
    if (role_implementation(game, coalition, protocol, role).variant == StandIn::null_ablation) return false;
  return true;
}

void JudgeBinding::validate(std::size_t n, const std::vector<std::string>& tasks) const {
  if (!judge) throw std::invalid_argument("judge binding has no judge");
  if (max_attempts < 1) throw std::invalid_argument("judge needs at least one attempt");
  for (const auto& t : tasks) {
    auto it = transcripts.find(t);
    if (it == transcripts.end()) throw std::invalid_argument("no transcripts for task '" + t + "'");
    if (it->second.per_agent.size() != n)
      throw std::invalid_argument("task '" + t + "' has " + std::to_string(it->second.per_agent.size()) +
                                  " transcripts for " + std::to_string(n) + " agents");
  }
}

IntrospectiveEvaluator::IntrospectiveEvaluator(JudgeBinding binding, std::vector<AgentId> agents,
                                               std::optional<AgentIndex> lead)
    : binding_(std::move(binding)), agents_(std::move(agents)), lead_(lead) {
  if (!binding_.judge) throw std::invalid_argument("judge binding has no judge");
  if (binding_.max_attempts < 1) throw std::invalid_argument("judge needs at least one attempt");
  for (const auto& [task, t] : binding_.transcripts)
    if (t.per_agent.size() != agents_.size())
      throw std::invalid_argument("task '" + task + "' transcripts do not cover every agent");
}

Trace IntrospectiveEvaluator::evaluate(const Coalition& coalition, std::span<const RoleProtocol>,
                                       const std::string& task, std::int64_t) const {
  auto it = binding_.transcripts.find(task);
  if (it == binding_.transcripts.end()) throw EvaluationError("no transcripts for task '" + task + "'");
  std::vector<llm::AgentTranscript> transcripts;
  transcripts.reserve(agents_.size());
  for (const auto& a : agents_) transcripts.push_back({a, it->second.per_agent[a.index]});
  const auto messages = llm::render_judge_prompt(it->second.task, transcripts, coalition, lead_);

  Trace trace;
  for (int attempt = 1; attempt <= binding_.max_attempts; ++attempt) {
    llm::ChatReply reply;
    try {
      reply = binding_.judge->chat(messages);
    } catch (const llm::LlmError& e) {
      ++failed_;
      throw EvaluationError("task '" + task + "': judge request failed: " + e.what());
    }
    trace.prompt_tokens += reply.prompt_tokens;
    trace.completion_tokens += reply.completion_tokens;
    trace.model = reply.model.empty() ? binding_.judge->model() : reply.model;
    if (auto verdict = llm::parse_judge_verdict(reply.text)) {
      trace.score = verdict->success;
      trace.billable_tokens = trace.prompt_tokens + trace.completion_tokens;
      return trace;
    }
    ++malformed_;
  }
  ++failed_;
  throw EvaluationError("task '" + task + "': judge reply was not a valid verdict after " +
                        std::to_string(binding_.max_attempts) + " attempts");
}

std::string IntrospectiveEvaluator::digest() const {
  nlohmann::json j;
  j["kind"] = "introspective";
  j["judge_model"] = binding_.judge->model();
  j["max_attempts"] = binding_.max_attempts;
  if (lead_) j["lead"] = *lead_;
  for (const auto& a : agents_) j["agents"].push_back(a.label);
  for (const auto& [task, t] : binding_.transcripts) {
    j["transcripts"][task]["task"] = t.task;
    j["transcripts"][task]["per_agent"] = t.per_agent;
  }
  return sha256_hex("evaluator:" + j.dump());
}

double introspective_utility(const JudgeBinding& binding, const Game& game, const Coalition& coalition,
                             const EvaluationSpec& spec) {
  spec.validate();
  binding.validate(game.size(), spec.tasks);
  const IntrospectiveEvaluator evaluator(binding, game.agents, game.topology.orchestrator());
  const auto roles = resolve_roles(coalition, make_introspective_protocol(game));
  double sum = 0.0;
  for (const auto& task : spec.tasks)
    for (auto seed : spec.seeds) sum += evaluator.evaluate(coalition, roles, task, seed).score;
  return sum / static_cast<double>(spec.tasks.size() * spec.seeds.size());
}

}  // namespace masattr
