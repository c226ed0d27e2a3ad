#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "masattr/game.hpp"
#include "masattr/kernels.hpp"
#include "masattr/protocols.hpp"

namespace masattr::synth {

struct AgentCapability {
  double skill = 0.0;             // [0, 1], used when the original backbone runs
  double substitute_skill = 0.0;  // [0, 1], used under replacement
  std::int64_t token_cost = 0;    // billed only when the original runs
};

struct CapabilityProfile {
  std::vector<AgentCapability> per_agent;
  void validate(std::size_t n) const;
};

enum class Family { additive, threshold, orchestrated, noisy };

std::string to_string(Family f);
Family family_from_string(const std::string& name);

// A deterministic stand-in for a multi-agent system:
//   additive      sum of effective skills of instantiated roles
//   threshold(k)  1 if at least k instantiated roles have positive skill
//   orchestrated  additive + bonus while the hub runs; 0 once it is ablated
//   noisy         additive + Gaussian(0, sigma) seeded per run
// Effective skill is `skill` for original roles, `substitute_skill` for
// replacements and 0 for null or simulated-null roles.
struct SyntheticGameSpec {
  Family family = Family::additive;
  std::size_t threshold = 1;
  double bonus = 0.0;
  double sigma = 0.0;
  std::uint64_t noise_seed = 0;
  Topology topology = Topology::decentralized(1);
  CapabilityProfile profile;

  std::size_t size() const { return topology.agent_count(); }
  void validate() const;
  std::string canonical() const;

  // Additive game whose agents have the given skills (substitute 0, cost 0).
  static SyntheticGameSpec additive(Topology topology, std::span<const double> skills);
};

struct SynthOutcome {
  double score = 0.0;
  std::int64_t tokens = 0;  // billable: original roles only
  friend bool operator==(const SynthOutcome&, const SynthOutcome&) = default;
};

SynthOutcome synth_evaluate(const SyntheticGameSpec& spec, const Coalition& coalition,
                            std::span<const RoleProtocol> role_impls, const std::string& task, std::int64_t seed);

class SyntheticEvaluator final : public CoalitionEvaluator {
 public:
  explicit SyntheticEvaluator(SyntheticGameSpec spec);

  Trace evaluate(const Coalition& coalition, std::span<const RoleProtocol> role_impls, const std::string& task,
                 std::int64_t seed) const override;
  std::string digest() const override;
  const SyntheticGameSpec& spec() const { return spec_; }

 private:
  SyntheticGameSpec spec_;
};

Game make_synthetic_game(const SyntheticGameSpec& spec, std::vector<std::string> labels = {});

struct OracleQuery {
  ExecutabilityPolicy policy = ExecutabilityPolicy::zero_utility();
  std::vector<std::string> tasks{"task"};
  std::vector<std::int64_t> seeds{0};
  double empty_value = 0.0;
};

inline constexpr std::size_t kOracleMaxAgents = 8;

// Brute-force attribution by direct formula: enumerates every join order
// (Shapley, Myerson), every group-contiguous join order (Owen), or the n+1
// leave-one-out coalitions. Shares no code with the kernels. Sampled Shapley
// is checked against its exact value.
std::vector<double> expected_attribution_oracle(const SyntheticGameSpec& spec, const KernelSpec& kernel,
                                                const ProtocolVector& protocol, const OracleQuery& query = {});

}  // namespace masattr::synth
