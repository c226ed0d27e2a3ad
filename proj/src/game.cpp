#include "masattr/game.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "masattr/digest.hpp"
#include "masattr/errors.hpp"

namespace masattr {

namespace {

void check_index(AgentIndex i, std::size_t n, const char* what) {
  if (i >= n)
    throw std::out_of_range(std::string(what) + " index " + std::to_string(i) + " out of range for " +
                            std::to_string(n) + " agents");
}

void check_width(std::size_t n) {
  if (n == 0) throw std::invalid_argument("topology needs at least one agent");
  if (n > kMaxAgents) throw std::invalid_argument("at most 64 agents are supported");
}

}  // namespace

std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::independent: return "independent";
    case TopologyKind::centralized: return "centralized";
    case TopologyKind::decentralized: return "decentralized";
    case TopologyKind::hybrid: return "hybrid";
  }
  return "unknown";
}

TopologyKind topology_kind_from_string(const std::string& name) {
  if (name == "independent") return TopologyKind::independent;
  if (name == "centralized") return TopologyKind::centralized;
  if (name == "decentralized") return TopologyKind::decentralized;
  if (name == "hybrid") return TopologyKind::hybrid;
  throw ConfigError("unknown topology kind '" + name +
                    "' (expected independent, centralized, decentralized or hybrid)");
}

Topology Topology::independent(std::size_t n, AgentIndex aggregator) {
  check_width(n);
  check_index(aggregator, n, "aggregator");
  Topology t;
  t.kind_ = TopologyKind::independent;
  t.n_ = n;
  t.aggregator_ = aggregator;
  for (AgentIndex i = 0; i < n; ++i)
    if (i != aggregator) t.edges_.push_back({i, aggregator});
  return t;
}

Topology Topology::centralized(std::size_t n, AgentIndex orchestrator) {
  check_width(n);
  check_index(orchestrator, n, "orchestrator");
  Topology t;
  t.kind_ = TopologyKind::centralized;
  t.n_ = n;
  t.orchestrator_ = orchestrator;
  for (AgentIndex i = 0; i < n; ++i)
    if (i != orchestrator) t.edges_.push_back({orchestrator, i});
  return t;
}

Topology Topology::decentralized(std::size_t n) {
  Topology t;
  t.kind_ = TopologyKind::decentralized;
  t.n_ = n;
  if (n > kMaxAgents) throw std::invalid_argument("at most 64 agents are supported");
  for (AgentIndex i = 0; i < n; ++i)
    for (AgentIndex j = 0; j < n; ++j)
      if (i != j) t.edges_.push_back({i, j});
  return t;
}

Topology Topology::hybrid(std::size_t n, AgentIndex orchestrator, std::vector<Edge> peer_edges) {
  Topology t = centralized(n, orchestrator);
  t.kind_ = TopologyKind::hybrid;
  if (peer_edges.empty()) throw std::invalid_argument("hybrid topology needs at least one peer link");
  std::set<Edge> seen(t.edges_.begin(), t.edges_.end());
  for (const auto& e : peer_edges) {
    check_index(e.from, n, "peer edge");
    check_index(e.to, n, "peer edge");
    if (e.from == e.to) throw std::invalid_argument("peer edge is a self loop");
    if (e.from == orchestrator || e.to == orchestrator)
      throw std::invalid_argument("peer edges connect workers; the orchestrator is already linked");
    if (seen.insert(e).second) t.edges_.push_back(e);
  }
  return t;
}

std::vector<Edge> Topology::default_peer_edges(std::size_t n, AgentIndex orchestrator) {
  std::vector<AgentIndex> workers;
  for (AgentIndex i = 0; i < n; ++i)
    if (i != orchestrator) workers.push_back(i);
  std::vector<Edge> out;
  for (std::size_t k = 0; k + 1 < workers.size(); ++k) {
    out.push_back({workers[k], workers[k + 1]});
    out.push_back({workers[k + 1], workers[k]});
  }
  return out;
}

std::vector<AgentIndex> Topology::required_roles() const {
  std::vector<AgentIndex> out;
  if (orchestrator_) out.push_back(*orchestrator_);
  if (aggregator_) out.push_back(*aggregator_);
  return out;
}

std::optional<AgentIndex> Topology::hub() const { return orchestrator_ ? orchestrator_ : aggregator_; }

std::vector<std::uint64_t> undirected_adjacency(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::uint64_t> adj(n, 0);
  for (const auto& e : edges) {
    check_index(e.from, n, "graph edge");
    check_index(e.to, n, "graph edge");
    if (e.from == e.to) continue;
    adj[e.from] |= std::uint64_t{1} << e.to;
    adj[e.to] |= std::uint64_t{1} << e.from;
  }
  return adj;
}

std::string to_string(StandIn s) {
  switch (s) {
    case StandIn::original: return "original";
    case StandIn::null_ablation: return "null_ablation";
    case StandIn::simulated_null: return "simulated_null";
    case StandIn::replacement: return "replacement";
  }
  return "unknown";
}

RoleProtocol RoleProtocol::replacement(std::string substitute_spec) {
  if (substitute_spec.empty()) throw std::invalid_argument("replacement needs a non-empty substitute");
  return {StandIn::replacement, std::move(substitute_spec)};
}

std::string RoleProtocol::describe() const {
  if (variant == StandIn::replacement) return "replacement(" + substitute + ")";
  return to_string(variant);
}

ProtocolVector::ProtocolVector(std::vector<RoleProtocol> per_role) : per_role_(std::move(per_role)) {
  for (const auto& r : per_role_) {
    if (r.variant == StandIn::replacement && r.substitute.empty())
      throw std::invalid_argument("replacement needs a non-empty substitute");
    if (r.variant != StandIn::replacement && !r.substitute.empty())
      throw std::invalid_argument("only replacement stand-ins carry a substitute");
  }
}

bool ProtocolVector::is_mixed() const {
  return std::adjacent_find(per_role_.begin(), per_role_.end(), [](const auto& a, const auto& b) {
           return a.variant != b.variant;
         }) != per_role_.end();
}

std::string ProtocolVector::canonical() const {
  std::string out;
  for (std::size_t i = 0; i < per_role_.size(); ++i) {
    if (i) out += ';';
    out += per_role_[i].describe();
  }
  return out;
}

std::string ProtocolVector::digest() const { return sha256_hex("protocol:" + canonical()); }

std::string to_string(BehaviorMetric m) {
  switch (m) {
    case BehaviorMetric::task_score: return "task_score";
    case BehaviorMetric::billable_tokens: return "billable_tokens";
    case BehaviorMetric::total_tokens: return "total_tokens";
  }
  return "unknown";
}

BehaviorMetric behavior_metric_from_string(const std::string& name) {
  if (name == "task_score") return BehaviorMetric::task_score;
  if (name == "billable_tokens") return BehaviorMetric::billable_tokens;
  if (name == "total_tokens") return BehaviorMetric::total_tokens;
  throw ConfigError("unknown metric '" + name + "' (expected task_score, billable_tokens or total_tokens)");
}

double apply_metric(BehaviorMetric metric, const Trace& trace) {
  switch (metric) {
    case BehaviorMetric::task_score: return trace.score;
    case BehaviorMetric::billable_tokens: return static_cast<double>(trace.billable_tokens);
    case BehaviorMetric::total_tokens:
      return static_cast<double>(trace.prompt_tokens + trace.completion_tokens);
  }
  return trace.score;
}

std::string to_string(SeedMode m) { return m == SeedMode::shared ? "shared" : "independent"; }

SeedMode seed_mode_from_string(const std::string& name) {
  if (name == "shared") return SeedMode::shared;
  if (name == "independent") return SeedMode::independent;
  throw ConfigError("unknown seed mode '" + name + "' (expected shared or independent)");
}

void EvaluationSpec::validate() const {
  if (tasks.empty()) throw std::invalid_argument("evaluation spec needs at least one task");
  if (seeds.empty()) throw std::invalid_argument("evaluation spec needs at least one seed");
}

void validate_partition(const Partition& groups, std::size_t n) {
  std::vector<bool> seen(n, false);
  std::size_t count = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("partition contains an empty group");
    for (auto i : g) {
      check_index(i, n, "partition member");
      if (seen[i]) throw std::invalid_argument("agent " + std::to_string(i) + " appears in two groups");
      seen[i] = true;
      ++count;
    }
  }
  if (count != n) throw std::invalid_argument("partition does not cover every agent");
}

void Game::validate() const {
  const std::size_t n = agents.size();
  if (n == 0) throw std::invalid_argument("game has no agents");
  if (n > kMaxAgents) throw std::invalid_argument("at most 64 agents are supported");
  for (std::size_t i = 0; i < n; ++i)
    if (agents[i].index != i) throw std::invalid_argument("agent indices must be 0..n-1 in order");
  if (topology.agent_count() != n) throw std::invalid_argument("topology size differs from agent count");
  if (!evaluator) throw std::invalid_argument("game has no evaluator bound");
  if (groups) validate_partition(*groups, n);
  if (graph) (void)undirected_adjacency(n, *graph);
  if (!std::isfinite(empty_value)) throw std::invalid_argument("empty-coalition value must be finite");
}

std::string Game::digest() const {
  nlohmann::json j;
  for (const auto& a : agents) j["agents"].push_back(a.label);
  j["topology"]["kind"] = to_string(topology.kind());
  for (const auto& e : topology.edges()) j["topology"]["edges"].push_back({e.from, e.to});
  if (auto o = topology.orchestrator()) j["topology"]["orchestrator"] = *o;
  if (auto a = topology.aggregator()) j["topology"]["aggregator"] = *a;
  if (groups) j["groups"] = *groups;
  if (graph)
    for (const auto& e : *graph) j["graph"].push_back({e.from, e.to});
  j["empty_value"] = empty_value;
  j["evaluator"] = evaluator ? evaluator->digest() : "";
  return sha256_hex("game:" + j.dump());
}

Game make_game(Topology topology, std::shared_ptr<const CoalitionEvaluator> evaluator,
               std::vector<std::string> labels) {
  Game g;
  g.topology = std::move(topology);
  g.evaluator = std::move(evaluator);
  const std::size_t n = g.topology.agent_count();
  if (!labels.empty() && labels.size() != n)
    throw std::invalid_argument("label count differs from topology size");
  for (AgentIndex i = 0; i < n; ++i)
    g.agents.push_back({i, labels.empty() ? "agent_" + std::to_string(i) : labels[i]});
  g.validate();
  return g;
}

RoleProtocol role_implementation(const Game& game, const Coalition& coalition,
                                 const ProtocolVector& protocol, AgentIndex role) {
  check_index(role, game.size(), "role");
  if (protocol.size() != game.size())
    throw std::invalid_argument("protocol vector length differs from agent count");
  if (coalition.width() != game.size()) throw std::invalid_argument("coalition width differs from agent count");
  return coalition.contains(role) ? RoleProtocol::original() : protocol[role];
}

std::vector<RoleProtocol> resolve_roles(const Coalition& coalition, const ProtocolVector& protocol) {
  std::vector<RoleProtocol> out;
  out.reserve(protocol.size());
  for (AgentIndex k = 0; k < protocol.size(); ++k)
    out.push_back(coalition.contains(k) ? RoleProtocol::original() : protocol[k]);
  return out;
}

}  // namespace masattr
