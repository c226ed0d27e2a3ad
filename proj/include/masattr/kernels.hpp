#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "masattr/coalition_game.hpp"

namespace masattr {

enum class KernelKind { loo, shapley_exact, shapley_sampled, owen, myerson };

std::string to_string(KernelKind k);
KernelKind kernel_kind_from_string(const std::string& name);

inline constexpr std::size_t kDefaultExactLimit = 20;

// Coalition distribution plus its options.
struct KernelSpec {
  KernelKind kind = KernelKind::loo;
  std::size_t budget = 0;   // shapley_sampled: permutations
  std::uint64_t seed = 0;   // shapley_sampled
  std::optional<Partition> groups;          // owen
  std::optional<std::vector<Edge>> graph;   // myerson
  std::size_t exact_limit = kDefaultExactLimit;

  static KernelSpec loo() { return {}; }
  static KernelSpec shapley_exact() { return with_kind(KernelKind::shapley_exact); }
  static KernelSpec shapley_sampled(std::size_t budget, std::uint64_t seed) {
    auto k = with_kind(KernelKind::shapley_sampled);
    k.budget = budget;
    k.seed = seed;
    return k;
  }
  static KernelSpec owen(Partition groups) {
    auto k = with_kind(KernelKind::owen);
    k.groups = std::move(groups);
    return k;
  }
  static KernelSpec myerson(std::vector<Edge> graph) {
    auto k = with_kind(KernelKind::myerson);
    k.graph = std::move(graph);
    return k;
  }
  static KernelSpec with_kind(KernelKind kind) {
    KernelSpec k;
    k.kind = kind;
    return k;
  }

  // Throws std::invalid_argument naming the missing or bad option.
  void validate(std::size_t n) const;
  bool is_exact() const { return kind != KernelKind::shapley_sampled; }
};

struct AttributionResult {
  std::vector<AgentId> agents;
  std::vector<double> scores;
  // Per-agent standard error; only filled by shapley_sampled.
  std::vector<double> standard_errors;
  KernelSpec kernel;
  std::string protocol_digest;
  std::string protocol;  // human-readable stand-ins
  bool experimental_protocol = false;
  std::string metric;
  std::string policy;
  // Distinct non-empty coalitions whose utility the kernel consumed.
  std::size_t coalition_evaluations = 0;
  CostLedger cost;
};

AttributionResult attribute_loo(const CoalitionGame& game, unsigned jobs = 1);
AttributionResult attribute_shapley_exact(const CoalitionGame& game, std::size_t exact_limit = kDefaultExactLimit,
                                          unsigned jobs = 1);
AttributionResult attribute_shapley_sampled(const CoalitionGame& game, std::size_t budget, std::uint64_t seed);
AttributionResult attribute_owen(const CoalitionGame& game, const Partition& groups,
                                 std::size_t exact_limit = kDefaultExactLimit, unsigned jobs = 1);
// Shapley value of the graph-restricted game over the undirected closure of
// `graph`. Only connected coalitions are ever evaluated.
AttributionResult attribute_myerson(const CoalitionGame& game, std::span<const Edge> graph,
                                    std::size_t exact_limit = kDefaultExactLimit, unsigned jobs = 1);

AttributionResult attribute(const KernelSpec& kernel, const CoalitionGame& game, unsigned jobs = 1);

// Non-empty coalitions an exact kernel evaluates, sorted by mask. Sampled
// Shapley has no fixed set and is rejected.
std::vector<Coalition> kernel_coalitions(const KernelSpec& kernel, std::size_t n);

// Connected components of `members` in the undirected graph `adjacency`.
std::vector<std::uint64_t> connected_components(std::uint64_t members, std::span<const std::uint64_t> adjacency);

// Agents ordered by ascending score, ties by index.
std::vector<AgentIndex> rank_ascending(std::span<const double> scores);

}  // namespace masattr
