#include "masattr/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "masattr/errors.hpp"

namespace masattr {

std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::loo: return "loo";
    case KernelKind::shapley_exact: return "shapley_exact";
    case KernelKind::shapley_sampled: return "shapley_sampled";
    case KernelKind::owen: return "owen";
    case KernelKind::myerson: return "myerson";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "loo") return KernelKind::loo;
  if (name == "shapley_exact" || name == "shapley") return KernelKind::shapley_exact;
  if (name == "shapley_sampled") return KernelKind::shapley_sampled;
  if (name == "owen") return KernelKind::owen;
  if (name == "myerson") return KernelKind::myerson;
  throw ConfigError("unknown kernel kind '" + name +
                    "' (expected loo, shapley_exact, shapley_sampled, owen or myerson)");
}

void KernelSpec::validate(std::size_t n) const {
  switch (kind) {
    case KernelKind::shapley_sampled:
      if (budget < 1) throw std::invalid_argument("shapley_sampled needs budget >= 1");
      break;
    case KernelKind::owen:
      if (!groups) throw std::invalid_argument("owen kernel needs a group partition (groups)");
      validate_partition(*groups, n);
      break;
    case KernelKind::myerson:
      if (!graph) throw std::invalid_argument("myerson kernel needs an interaction graph (graph)");
      (void)undirected_adjacency(n, *graph);
      break;
    default: break;
  }
  if (is_exact() && kind != KernelKind::loo && n > exact_limit)
    throw std::invalid_argument(to_string(kind) + " enumerates 2^n coalitions and is limited to " +
                                std::to_string(exact_limit) + " agents (game has " + std::to_string(n) +
                                "); use shapley_sampled instead");
  if (exact_limit > 30) throw std::invalid_argument("exact enumeration limit above 30 agents is not supported");
}

namespace {

// Tracks the distinct coalitions a kernel consumes and what they cost.
class ValueSource {
 public:
  explicit ValueSource(const CoalitionGame& game) : game_(game), n_(game.size()) {}

  double operator()(std::uint64_t mask) {
    if (auto it = seen_.find(mask); it != seen_.end()) return it->second;
    const auto rec = game_.evaluate(Coalition(n_, mask));
    if (mask != 0) cost_.add(rec);
    seen_.emplace(mask, rec.value);
    return rec.value;
  }

  std::size_t distinct_non_empty() const { return seen_.size() - (seen_.contains(0) ? 1 : 0); }
  const CostLedger& cost() const { return cost_; }

 private:
  const CoalitionGame& game_;
  std::size_t n_;
  std::unordered_map<std::uint64_t, double> seen_;
  CostLedger cost_;
};

AttributionResult make_result(const CoalitionGame& game, KernelSpec kernel) {
  AttributionResult r;
  r.agents = game.game().agents;
  r.scores.assign(game.size(), 0.0);
  r.kernel = std::move(kernel);
  r.protocol_digest = game.protocol().digest();
  r.protocol = game.protocol().canonical();
  r.experimental_protocol = game.protocol().is_mixed();
  r.metric = to_string(game.spec().metric);
  r.policy = game.policy().describe();
  return r;
}

void prefetch_masks(const CoalitionGame& game, const std::vector<std::uint64_t>& masks, unsigned jobs) {
  if (jobs <= 1) return;
  std::vector<Coalition> cs;
  cs.reserve(masks.size());
  for (auto m : masks) cs.emplace_back(game.size(), m);
  game.prefetch(cs, jobs);
}

std::vector<std::uint64_t> group_masks(const Partition& groups) {
  std::vector<std::uint64_t> out;
  for (const auto& g : groups) {
    std::uint64_t m = 0;
    for (auto i : g) m |= std::uint64_t{1} << i;
    out.push_back(m);
  }
  return out;
}

// Visits every subset of `mask`, including 0 and mask itself.
template <typename F>
void for_each_subset(std::uint64_t mask, F&& f) {
  std::uint64_t s = 0;
  do {
    f(s);
    s = (s - mask) & mask;
  } while (s != 0);
}

std::uint64_t union_of(std::uint64_t selector, const std::vector<std::uint64_t>& masks) {
  std::uint64_t u = 0;
  for (std::uint64_t m = selector; m != 0; m &= m - 1) u |= masks[static_cast<std::size_t>(std::countr_zero(m))];
  return u;
}

double factorial_ratio(std::size_t k, std::size_t m) {
  // k! (m-k-1)! / m!
  return shapley_weight(k, m);
}

std::vector<std::uint64_t> owen_masks(const Partition& groups) {
  const auto gm = group_masks(groups);
  const std::size_t m = gm.size();
  std::set<std::uint64_t> out;
  for (std::size_t gi = 0; gi < m; ++gi) {
    const std::uint64_t others = Coalition::full_mask(m) & ~(std::uint64_t{1} << gi);
    for_each_subset(others, [&](std::uint64_t t) {
      const auto u = union_of(t, gm);
      for_each_subset(gm[gi], [&](std::uint64_t s) { out.insert(u | s); });
    });
  }
  out.erase(0);
  return {out.begin(), out.end()};
}

bool is_connected(std::uint64_t members, std::span<const std::uint64_t> adj) {
  if (members == 0) return false;
  std::uint64_t reach = members & (~members + 1);
  for (;;) {
    std::uint64_t next = reach;
    for (std::uint64_t m = reach; m != 0; m &= m - 1) next |= adj[static_cast<std::size_t>(std::countr_zero(m))];
    next &= members;
    if (next == reach) break;
    reach = next;
  }
  return reach == members;
}

}  // namespace

std::vector<std::uint64_t> connected_components(std::uint64_t members, std::span<const std::uint64_t> adjacency) {
  std::vector<std::uint64_t> comps;
  std::uint64_t rest = members;
  while (rest != 0) {
    std::uint64_t reach = rest & (~rest + 1);
    for (;;) {
      std::uint64_t next = reach;
      for (std::uint64_t m = reach; m != 0; m &= m - 1)
        next |= adjacency[static_cast<std::size_t>(std::countr_zero(m))];
      next &= members;
      if (next == reach) break;
      reach = next;
    }
    comps.push_back(reach);
    rest &= ~reach;
  }
  return comps;
}

std::vector<AgentIndex> rank_ascending(std::span<const double> scores) {
  std::vector<AgentIndex> order(scores.size());
  std::iota(order.begin(), order.end(), AgentIndex{0});
  std::stable_sort(order.begin(), order.end(), [&](AgentIndex a, AgentIndex b) { return scores[a] < scores[b]; });
  return order;
}

std::vector<Coalition> kernel_coalitions(const KernelSpec& kernel, std::size_t n) {
  kernel.validate(n);
  std::vector<std::uint64_t> masks;
  const auto full = Coalition::full_mask(n);
  switch (kernel.kind) {
    case KernelKind::loo:
      masks.push_back(full);
      for (AgentIndex i = 0; i < n; ++i)
        if (const auto m = full & ~(std::uint64_t{1} << i); m != 0) masks.push_back(m);
      break;
    case KernelKind::shapley_exact:
      for (std::uint64_t m = 1; m <= full; ++m) masks.push_back(m);
      break;
    case KernelKind::owen: masks = owen_masks(*kernel.groups); break;
    case KernelKind::myerson: {
      const auto adj = undirected_adjacency(n, *kernel.graph);
      for (std::uint64_t m = 1; m <= full; ++m)
        if (is_connected(m, adj)) masks.push_back(m);
      break;
    }
    case KernelKind::shapley_sampled:
      throw std::invalid_argument("shapley_sampled has no fixed coalition set");
  }
  std::sort(masks.begin(), masks.end());
  masks.erase(std::unique(masks.begin(), masks.end()), masks.end());
  std::vector<Coalition> out;
  out.reserve(masks.size());
  for (auto m : masks) out.emplace_back(n, m);
  return out;
}

AttributionResult attribute_loo(const CoalitionGame& game, unsigned jobs) {
  const std::size_t n = game.size();
  auto result = make_result(game, KernelSpec::loo());
  const auto full = Coalition::full_mask(n);
  std::vector<std::uint64_t> masks{full};
  for (AgentIndex i = 0; i < n; ++i) masks.push_back(full & ~(std::uint64_t{1} << i));
  prefetch_masks(game, masks, jobs);

  ValueSource v(game);
  const double grand = v(full);
  for (AgentIndex i = 0; i < n; ++i) result.scores[i] = grand - v(masks[i + 1]);
  result.coalition_evaluations = v.distinct_non_empty();
  result.cost = v.cost();
  return result;
}

AttributionResult attribute_shapley_exact(const CoalitionGame& game, std::size_t exact_limit, unsigned jobs) {
  const std::size_t n = game.size();
  KernelSpec spec = KernelSpec::shapley_exact();
  spec.exact_limit = exact_limit;
  spec.validate(n);
  auto result = make_result(game, spec);

  const std::uint64_t count = std::uint64_t{1} << n;
  if (jobs > 1) {
    std::vector<std::uint64_t> masks;
    masks.reserve(count - 1);
    for (std::uint64_t m = 1; m < count; ++m) masks.push_back(m);
    prefetch_masks(game, masks, jobs);
  }
  std::vector<double> value(count);
  for (std::uint64_t m = 0; m < count; ++m) {
    const auto rec = game.evaluate(Coalition(n, m));
    value[m] = rec.value;
    if (m != 0) result.cost.add(rec);
  }

  std::vector<double> weight(n);
  for (std::size_t s = 0; s < n; ++s) weight[s] = shapley_weight(s, n);
  for (std::uint64_t s = 0; s + 1 < count; ++s) {
    const double w = weight[static_cast<std::size_t>(std::popcount(s))];
    for (AgentIndex i = 0; i < n; ++i) {
      const std::uint64_t bit = std::uint64_t{1} << i;
      if (s & bit) continue;
      result.scores[i] += w * (value[s | bit] - value[s]);
    }
  }
  result.coalition_evaluations = static_cast<std::size_t>(count - 1);
  return result;
}

AttributionResult attribute_shapley_sampled(const CoalitionGame& game, std::size_t budget, std::uint64_t seed) {
  const std::size_t n = game.size();
  const auto spec = KernelSpec::shapley_sampled(budget, seed);
  spec.validate(n);
  auto result = make_result(game, spec);

  ValueSource v(game);
  std::mt19937_64 rng(seed);
  std::vector<AgentIndex> perm(n);
  std::iota(perm.begin(), perm.end(), AgentIndex{0});
  // Welford accumulators per agent.
  std::vector<double> mean(n, 0.0), m2(n, 0.0);
  const double empty = v(0);
  for (std::size_t b = 1; b <= budget; ++b) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::uint64_t s = 0;
    double prev = empty;
    for (auto i : perm) {
      s |= std::uint64_t{1} << i;
      const double cur = v(s);
      const double x = cur - prev;
      prev = cur;
      const double d = x - mean[i];
      mean[i] += d / static_cast<double>(b);
      m2[i] += d * (x - mean[i]);
    }
  }
  result.scores = mean;
  result.standard_errors.assign(n, 0.0);
  if (budget > 1)
    for (AgentIndex i = 0; i < n; ++i)
      result.standard_errors[i] =
          std::sqrt(m2[i] / static_cast<double>(budget - 1) / static_cast<double>(budget));
  result.coalition_evaluations = v.distinct_non_empty();
  result.cost = v.cost();
  return result;
}

AttributionResult attribute_owen(const CoalitionGame& game, const Partition& groups, std::size_t exact_limit,
                                 unsigned jobs) {
  const std::size_t n = game.size();
  KernelSpec spec = KernelSpec::owen(groups);
  spec.exact_limit = exact_limit;
  spec.validate(n);
  auto result = make_result(game, spec);
  if (jobs > 1) prefetch_masks(game, owen_masks(groups), jobs);

  const auto gm = group_masks(groups);
  const std::size_t m = gm.size();
  ValueSource v(game);
  for (std::size_t gi = 0; gi < m; ++gi) {
    const std::size_t gsize = static_cast<std::size_t>(std::popcount(gm[gi]));
    const std::uint64_t other_groups = Coalition::full_mask(m) & ~(std::uint64_t{1} << gi);
    for (std::uint64_t members = gm[gi]; members != 0; members &= members - 1) {
      const auto i = static_cast<AgentIndex>(std::countr_zero(members));
      const std::uint64_t bit = std::uint64_t{1} << i;
      double phi = 0.0;
      for_each_subset(other_groups, [&](std::uint64_t t) {
        const double wt = factorial_ratio(static_cast<std::size_t>(std::popcount(t)), m);
        const auto u = union_of(t, gm);
        for_each_subset(gm[gi] & ~bit, [&](std::uint64_t s) {
          const double ws = factorial_ratio(static_cast<std::size_t>(std::popcount(s)), gsize);
          phi += wt * ws * (v(u | s | bit) - v(u | s));
        });
      });
      result.scores[i] = phi;
    }
  }
  result.coalition_evaluations = v.distinct_non_empty();
  result.cost = v.cost();
  return result;
}

AttributionResult attribute_myerson(const CoalitionGame& game, std::span<const Edge> graph, std::size_t exact_limit,
                                    unsigned jobs) {
  const std::size_t n = game.size();
  KernelSpec spec = KernelSpec::myerson({graph.begin(), graph.end()});
  spec.exact_limit = exact_limit;
  spec.validate(n);
  auto result = make_result(game, spec);
  const auto adj = undirected_adjacency(n, graph);
  const std::uint64_t count = std::uint64_t{1} << n;

  if (jobs > 1) {
    std::vector<std::uint64_t> masks;
    for (std::uint64_t s = 1; s < count; ++s)
      if (is_connected(s, adj)) masks.push_back(s);
    prefetch_masks(game, masks, jobs);
  }

  // Restricted game: v_g(S) = v(empty) + sum over components C of (v(C) - v(empty)).
  ValueSource v(game);
  const double base = v(0);
  std::vector<double> restricted(count);
  restricted[0] = base;
  for (std::uint64_t s = 1; s < count; ++s) {
    double total = base;
    for (auto c : connected_components(s, adj)) total += v(c) - base;
    restricted[s] = total;
  }

  std::vector<double> weight(n);
  for (std::size_t k = 0; k < n; ++k) weight[k] = shapley_weight(k, n);
  for (std::uint64_t s = 0; s < count; ++s) {
    const auto k = static_cast<std::size_t>(std::popcount(s));
    if (k >= n) continue;
    for (AgentIndex i = 0; i < n; ++i) {
      const std::uint64_t bit = std::uint64_t{1} << i;
      if (s & bit) continue;
      result.scores[i] += weight[k] * (restricted[s | bit] - restricted[s]);
    }
  }
  result.coalition_evaluations = v.distinct_non_empty();
  result.cost = v.cost();
  return result;
}

AttributionResult attribute(const KernelSpec& kernel, const CoalitionGame& game, unsigned jobs) {
  kernel.validate(game.size());
  AttributionResult r;
  switch (kernel.kind) {
    case KernelKind::loo: r = attribute_loo(game, jobs); break;
    case KernelKind::shapley_exact: r = attribute_shapley_exact(game, kernel.exact_limit, jobs); break;
    case KernelKind::shapley_sampled: r = attribute_shapley_sampled(game, kernel.budget, kernel.seed); break;
    case KernelKind::owen: r = attribute_owen(game, *kernel.groups, kernel.exact_limit, jobs); break;
    case KernelKind::myerson: r = attribute_myerson(game, *kernel.graph, kernel.exact_limit, jobs); break;
  }
  r.kernel = kernel;
  return r;
}

}  // namespace masattr
