#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "masattr/coalition.hpp"

namespace masattr {

struct AgentId {
  AgentIndex index = 0;
  std::string label;
};

struct Edge {
  AgentIndex from = 0;
  AgentIndex to = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

enum class TopologyKind { independent, centralized, decentralized, hybrid };

std::string to_string(TopologyKind kind);
TopologyKind topology_kind_from_string(const std::string& name);

// Directed communication structure of a fixed multi-agent architecture.
// Built only through the named factories so that edges always agree with
// the kind:
//   independent   every non-aggregator agent reports to the aggregator
//   centralized   orchestrator -> every other agent
//   decentralized complete directed graph
//   hybrid        centralized plus explicit worker-to-worker peer links
class Topology {
 public:
  static Topology independent(std::size_t n, AgentIndex aggregator);
  static Topology centralized(std::size_t n, AgentIndex orchestrator);
  static Topology decentralized(std::size_t n);
  static Topology hybrid(std::size_t n, AgentIndex orchestrator, std::vector<Edge> peer_edges);

  // Bidirectional links between consecutive workers, skipping the orchestrator.
  static std::vector<Edge> default_peer_edges(std::size_t n, AgentIndex orchestrator);

  TopologyKind kind() const { return kind_; }
  std::size_t agent_count() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::optional<AgentIndex> orchestrator() const { return orchestrator_; }
  std::optional<AgentIndex> aggregator() const { return aggregator_; }

  // Roles whose null ablation breaks the system (orchestrator or aggregator).
  std::vector<AgentIndex> required_roles() const;

  // Orchestrator if present, otherwise aggregator.
  std::optional<AgentIndex> hub() const;

 private:
  Topology() = default;

  TopologyKind kind_ = TopologyKind::decentralized;
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::optional<AgentIndex> orchestrator_;
  std::optional<AgentIndex> aggregator_;
};

// Undirected closure of an edge list as per-vertex neighbour bitmasks.
std::vector<std::uint64_t> undirected_adjacency(std::size_t n, std::span<const Edge> edges);

enum class StandIn { original, null_ablation, simulated_null, replacement };

std::string to_string(StandIn s);

// What occupies a role slot. `substitute` names the replacement backbone
// (model id or synthetic capability level) and is empty for other variants.
struct RoleProtocol {
  StandIn variant = StandIn::original;
  std::string substitute;

  static RoleProtocol original() { return {StandIn::original, {}}; }
  static RoleProtocol null_ablation() { return {StandIn::null_ablation, {}}; }
  static RoleProtocol simulated_null() { return {StandIn::simulated_null, {}}; }
  static RoleProtocol replacement(std::string substitute_spec);

  std::string describe() const;
  friend bool operator==(const RoleProtocol&, const RoleProtocol&) = default;
};

class ProtocolVector {
 public:
  ProtocolVector() = default;
  explicit ProtocolVector(std::vector<RoleProtocol> per_role);

  std::size_t size() const { return per_role_.size(); }
  const RoleProtocol& operator[](AgentIndex i) const { return per_role_.at(i); }
  const std::vector<RoleProtocol>& per_role() const { return per_role_; }

  // More than one stand-in kind across roles (experimental).
  bool is_mixed() const;
  std::string canonical() const;
  std::string digest() const;

  friend bool operator==(const ProtocolVector&, const ProtocolVector&) = default;

 private:
  std::vector<RoleProtocol> per_role_;
};

enum class BehaviorMetric { task_score, billable_tokens, total_tokens };

std::string to_string(BehaviorMetric m);
BehaviorMetric behavior_metric_from_string(const std::string& name);

// Outcome of one run of the system on one task under one seed.
struct Trace {
  double score = 0.0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t billable_tokens = 0;
  // Model the tokens are billed against; empty for unpriced (synthetic) runs.
  std::string model;
};

double apply_metric(BehaviorMetric metric, const Trace& trace);

enum class SeedMode { shared, independent };

std::string to_string(SeedMode m);
SeedMode seed_mode_from_string(const std::string& name);

struct EvaluationSpec {
  std::vector<std::string> tasks;
  std::vector<std::int64_t> seeds{0, 1, 2};
  BehaviorMetric metric = BehaviorMetric::task_score;
  SeedMode seed_mode = SeedMode::shared;

  void validate() const;
};

// Runs the system with the given role implementations. Implementations must
// be safe to call concurrently.
class CoalitionEvaluator {
 public:
  virtual ~CoalitionEvaluator() = default;

  virtual Trace evaluate(const Coalition& coalition, std::span<const RoleProtocol> role_impls,
                         const std::string& task, std::int64_t seed) const = 0;

  // Content hash of everything that determines evaluate()'s output.
  virtual std::string digest() const = 0;
};

using Partition = std::vector<std::vector<AgentIndex>>;

void validate_partition(const Partition& groups, std::size_t n);

struct Game {
  std::vector<AgentId> agents;
  Topology topology = Topology::decentralized(0);
  std::shared_ptr<const CoalitionEvaluator> evaluator;
  std::optional<Partition> groups;
  // Interaction graph for graph-restricted kernels; topology edges when unset.
  std::optional<std::vector<Edge>> graph;
  // Utility of the empty coalition. Never executed.
  double empty_value = 0.0;

  std::size_t size() const { return agents.size(); }
  std::vector<Edge> interaction_edges() const { return graph ? *graph : topology.edges(); }
  void validate() const;
  std::string digest() const;
};

// Builds a game with labels "agent_<i>" when none are supplied.
Game make_game(Topology topology, std::shared_ptr<const CoalitionEvaluator> evaluator,
               std::vector<std::string> labels = {});

RoleProtocol role_implementation(const Game& game, const Coalition& coalition,
                                 const ProtocolVector& protocol, AgentIndex role);

std::vector<RoleProtocol> resolve_roles(const Coalition& coalition, const ProtocolVector& protocol);

}  // namespace masattr
