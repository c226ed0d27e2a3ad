#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>

#include "masattr/cache_store.hpp"
#include "masattr/game.hpp"
#include "masattr/llm.hpp"
#include "masattr/protocols.hpp"

namespace masattr {

// Utility of one coalition plus what it cost to obtain.
struct UtilityRecord {
  double value = 0.0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t billable_tokens = 0;
  double cost = 0.0;
  // False when the value came from the empty-coalition constant or the
  // executability policy instead of running the system.
  bool executed = false;
};

struct CostLedger {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t billable_tokens = 0;
  double cost = 0.0;
  std::size_t executed_coalitions = 0;

  void add(const UtilityRecord& r);
  std::int64_t tokens() const { return prompt_tokens + completion_tokens; }
};

// The characteristic function of one attribution query: a game evaluated
// under a fixed protocol vector, evaluation spec and executability policy.
// Every per-(task, seed) run goes through the cache store, so queries that
// share a store share work. Thread-safe.
class CoalitionGame {
 public:
  CoalitionGame(Game game, ProtocolVector protocol, EvaluationSpec spec,
                ExecutabilityPolicy policy = ExecutabilityPolicy::zero_utility(),
                std::shared_ptr<CacheStore> cache = nullptr,
                std::shared_ptr<const llm::PricingTable> pricing = nullptr);

  const Game& game() const { return game_; }
  const ProtocolVector& protocol() const { return protocol_; }
  const EvaluationSpec& spec() const { return spec_; }
  const ExecutabilityPolicy& policy() const { return policy_; }
  const std::shared_ptr<CacheStore>& cache() const { return cache_; }
  std::size_t size() const { return game_.size(); }
  const std::string& game_digest() const { return game_digest_; }

  UtilityRecord evaluate(const Coalition& coalition) const;
  double utility(const Coalition& coalition) const { return evaluate(coalition).value; }

  // v(base + agent) - v(base); agent must not be in base.
  double marginal_contribution(AgentIndex agent, const Coalition& base) const;

  // Evaluates the coalitions on up to `jobs` threads so later lookups hit.
  void prefetch(std::span<const Coalition> coalitions, unsigned jobs) const;

  // Runs of the underlying evaluator (cache misses) through this object.
  std::int64_t evaluator_calls() const { return evaluator_calls_.load(); }

  std::int64_t effective_seed(std::int64_t seed, const Coalition& coalition) const;

 private:
  void check(const Coalition& c) const;

  Game game_;
  ProtocolVector protocol_;
  EvaluationSpec spec_;
  ExecutabilityPolicy policy_;
  std::shared_ptr<CacheStore> cache_;
  std::shared_ptr<const llm::PricingTable> pricing_;
  std::string game_digest_;
  std::string protocol_digest_;

  mutable std::mutex memo_mu_;
  mutable std::unordered_map<std::uint64_t, UtilityRecord> memo_;
  mutable std::atomic<std::int64_t> evaluator_calls_{0};
};

// One-shot forms over a private in-memory cache.
double coalition_utility(const Game& game, const Coalition& coalition, const ProtocolVector& protocol,
                         const EvaluationSpec& spec);
double marginal_contribution(const Game& game, AgentIndex agent, const Coalition& base,
                             const ProtocolVector& protocol, const EvaluationSpec& spec);

}  // namespace masattr
