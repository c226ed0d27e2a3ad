#include "masattr/coalition_game.hpp"

#include <cmath>
#include <thread>
#include <vector>

#include "masattr/errors.hpp"

namespace masattr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

void CostLedger::add(const UtilityRecord& r) {
  prompt_tokens += r.prompt_tokens;
  completion_tokens += r.completion_tokens;
  billable_tokens += r.billable_tokens;
  cost += r.cost;
  if (r.executed) ++executed_coalitions;
}

CoalitionGame::CoalitionGame(Game game, ProtocolVector protocol, EvaluationSpec spec, ExecutabilityPolicy policy,
                             std::shared_ptr<CacheStore> cache, std::shared_ptr<const llm::PricingTable> pricing)
    : game_(std::move(game)),
      protocol_(std::move(protocol)),
      spec_(std::move(spec)),
      policy_(policy),
      cache_(cache ? std::move(cache) : std::make_shared<CacheStore>()),
      pricing_(std::move(pricing)) {
  game_.validate();
  spec_.validate();
  if (protocol_.size() != game_.size())
    throw std::invalid_argument("protocol vector has " + std::to_string(protocol_.size()) + " roles for " +
                                std::to_string(game_.size()) + " agents");
  if (policy_.mode == ExecutabilityPolicy::Mode::baseline && !std::isfinite(policy_.value))
    throw std::invalid_argument("baseline policy value must be finite");
  game_digest_ = game_.digest();
  protocol_digest_ = protocol_.digest();
}

void CoalitionGame::check(const Coalition& c) const {
  if (c.width() != game_.size())
    throw std::invalid_argument("coalition width " + std::to_string(c.width()) + " differs from agent count " +
                                std::to_string(game_.size()));
}

std::int64_t CoalitionGame::effective_seed(std::int64_t seed, const Coalition& coalition) const {
  if (spec_.seed_mode == SeedMode::shared) return seed;
  return static_cast<std::int64_t>(splitmix64(static_cast<std::uint64_t>(seed) ^ splitmix64(coalition.mask())));
}

UtilityRecord CoalitionGame::evaluate(const Coalition& coalition) const {
  check(coalition);
  {
    std::lock_guard lock(memo_mu_);
    if (auto it = memo_.find(coalition.mask()); it != memo_.end()) return it->second;
  }

  UtilityRecord rec;
  if (coalition.is_empty()) {
    rec.value = game_.empty_value;
  } else if (!is_executable(game_, coalition, protocol_)) {
    switch (policy_.mode) {
      case ExecutabilityPolicy::Mode::zero_utility: rec.value = 0.0; break;
      case ExecutabilityPolicy::Mode::baseline: rec.value = policy_.value; break;
      case ExecutabilityPolicy::Mode::skip_with_error: {
        std::string members;
        for (auto i : coalition.members()) members += (members.empty() ? "" : ",") + std::to_string(i);
        throw EvaluationError("coalition {" + members + "} is not executable: a required hub role is ablated");
      }
    }
  } else {
    const auto roles = resolve_roles(coalition, protocol_);
    const auto metric = to_string(spec_.metric);
    double sum = 0.0;
    for (const auto& task : spec_.tasks) {
      for (auto seed : spec_.seeds) {
        const auto eff = effective_seed(seed, coalition);
        CacheKey key{game_digest_, coalition.mask(), protocol_digest_, task, eff, metric};
        const auto entry = cache_->get_or_evaluate(key, [&] {
          ++evaluator_calls_;
          const Trace t = game_.evaluator->evaluate(coalition, roles, task, eff);
          EvaluationOutcome out;
          out.score = apply_metric(spec_.metric, t);
          out.prompt_tokens = t.prompt_tokens;
          out.completion_tokens = t.completion_tokens;
          out.billable_tokens = t.billable_tokens;
          out.model = t.model;
          if (pricing_ && !t.model.empty() && pricing_->contains(t.model))
            out.cost = llm::price(t.prompt_tokens, t.completion_tokens, t.model, *pricing_);
          return out;
        });
        sum += entry.outcome.score;
        rec.prompt_tokens += entry.outcome.prompt_tokens;
        rec.completion_tokens += entry.outcome.completion_tokens;
        rec.billable_tokens += entry.outcome.billable_tokens;
        rec.cost += entry.outcome.cost;
      }
    }
    rec.value = sum / static_cast<double>(spec_.tasks.size() * spec_.seeds.size());
    rec.executed = true;
  }

  std::lock_guard lock(memo_mu_);
  memo_.emplace(coalition.mask(), rec);
  return rec;
}

double CoalitionGame::marginal_contribution(AgentIndex agent, const Coalition& base) const {
  check(base);
  if (agent >= game_.size()) throw std::out_of_range("agent index " + std::to_string(agent) + " out of range");
  if (base.contains(agent))
    throw std::invalid_argument("agent " + std::to_string(agent) + " is already in the base coalition");
  return utility(base.with(agent)) - utility(base);
}

void CoalitionGame::prefetch(std::span<const Coalition> coalitions, unsigned jobs) const {
  if (jobs <= 1 || coalitions.size() < 2) {
    for (const auto& c : coalitions) (void)evaluate(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  {
    std::vector<std::jthread> workers;
    const auto count = std::min<std::size_t>(jobs, coalitions.size());
    for (std::size_t w = 0; w < count; ++w) {
      workers.emplace_back([&] {
        for (std::size_t k = next++; k < coalitions.size(); k = next++) {
          try {
            (void)evaluate(coalitions[k]);
          } catch (...) {
            std::lock_guard lock(err_mu);
            if (!first_error) first_error = std::current_exception();
            next = coalitions.size();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

double coalition_utility(const Game& game, const Coalition& coalition, const ProtocolVector& protocol,
                         const EvaluationSpec& spec) {
  return CoalitionGame(game, protocol, spec).utility(coalition);
}

double marginal_contribution(const Game& game, AgentIndex agent, const Coalition& base,
                             const ProtocolVector& protocol, const EvaluationSpec& spec) {
  return CoalitionGame(game, protocol, spec).marginal_contribution(agent, base);
}

}  // namespace masattr
