#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "masattr/game.hpp"
#include "masattr/llm.hpp"

namespace masattr {

// How a coalition that cannot run (a required hub role ablated) is valued.
struct ExecutabilityPolicy {
  enum class Mode { zero_utility, skip_with_error, baseline };

  Mode mode = Mode::zero_utility;
  double value = 0.0;  // used by baseline

  static ExecutabilityPolicy zero_utility() { return {Mode::zero_utility, 0.0}; }
  static ExecutabilityPolicy skip_with_error() { return {Mode::skip_with_error, 0.0}; }
  static ExecutabilityPolicy baseline(double v);

  std::string describe() const;
};

ProtocolVector make_ablation_protocol(const Game& game);

// Simulated-null stand-ins, valued by a counterfactual judge.
ProtocolVector make_introspective_protocol(const Game& game);

// `substitutes` maps roles to substitute specs; roles not listed use
// `shared_default`, which must then be present.
ProtocolVector make_replacement_protocol(const Game& game, const std::map<AgentIndex, std::string>& substitutes,
                                         std::optional<std::string> shared_default = std::nullopt);

// False iff some structurally required role resolves to null ablation.
bool is_executable(const Game& game, const Coalition& coalition, const ProtocolVector& protocol);

// Grand-coalition transcripts of one task.
struct TaskTranscript {
  std::string task;
  std::vector<std::string> per_agent;
};

struct JudgeBinding {
  std::shared_ptr<const llm::ChatBackend> judge;
  std::map<std::string, TaskTranscript> transcripts;  // task id -> transcripts
  int max_attempts = 3;

  // Every task has a transcript for each of the n agent slots.
  void validate(std::size_t n, const std::vector<std::string>& tasks) const;
};

// Coalition evaluator that asks a judge whether the task would still succeed
// with only the coalition's agents. Never re-executes the system. Roles
// outside the coalition are shown as ABLATED in the grand-coalition
// transcript; the orchestrator, when there is one, is the lead transcript.
class IntrospectiveEvaluator final : public CoalitionEvaluator {
 public:
  IntrospectiveEvaluator(JudgeBinding binding, std::vector<AgentId> agents, std::optional<AgentIndex> lead);

  Trace evaluate(const Coalition& coalition, std::span<const RoleProtocol> role_impls,
                 const std::string& task, std::int64_t seed) const override;
  std::string digest() const override;

  // Judge replies that failed to parse, across all calls.
  std::int64_t malformed_replies() const { return malformed_.load(); }
  // Tasks that exhausted the retry budget.
  std::int64_t failed_tasks() const { return failed_.load(); }

 private:
  JudgeBinding binding_;
  std::vector<AgentId> agents_;
  std::optional<AgentIndex> lead_;
  mutable std::atomic<std::int64_t> malformed_{0};
  mutable std::atomic<std::int64_t> failed_{0};
};

// Mean judge success over the spec's tasks and seeds for one coalition.
double introspective_utility(const JudgeBinding& binding, const Game& game, const Coalition& coalition,
                             const EvaluationSpec& spec);

}  // namespace masattr
