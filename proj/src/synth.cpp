#include "masattr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "json.hpp"
#include "masattr/digest.hpp"
#include "masattr/errors.hpp"

namespace masattr::synth {

std::string to_string(Family f) {
  switch (f) {
    case Family::additive: return "additive";
    case Family::threshold: return "threshold";
    case Family::orchestrated: return "orchestrated";
    case Family::noisy: return "noisy";
  }
  return "unknown";
}

Family family_from_string(const std::string& name) {
  if (name == "additive") return Family::additive;
  if (name == "threshold") return Family::threshold;
  if (name == "orchestrated") return Family::orchestrated;
  if (name == "noisy") return Family::noisy;
  throw ConfigError("unknown synthetic family '" + name + "' (expected additive, threshold, orchestrated or noisy)");
}

void CapabilityProfile::validate(std::size_t n) const {
  if (per_agent.size() != n)
    throw std::invalid_argument("capability profile has " + std::to_string(per_agent.size()) + " entries for " +
                                std::to_string(n) + " agents");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = per_agent[i];
    if (!(a.skill >= 0.0 && a.skill <= 1.0))
      throw std::invalid_argument("agent " + std::to_string(i) + " skill must lie in [0, 1]");
    if (!(a.substitute_skill >= 0.0 && a.substitute_skill <= 1.0))
      throw std::invalid_argument("agent " + std::to_string(i) + " substitute_skill must lie in [0, 1]");
    if (a.token_cost < 0) throw std::invalid_argument("agent " + std::to_string(i) + " token_cost is negative");
  }
}

void SyntheticGameSpec::validate() const {
  const std::size_t n = size();
  profile.validate(n);
  if (family == Family::threshold && (threshold < 1 || threshold > n))
    throw std::invalid_argument("threshold k must lie in [1, n]");
  if (!std::isfinite(bonus)) throw std::invalid_argument("bonus must be finite");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be a finite value >= 0");
}

std::string SyntheticGameSpec::canonical() const {
  nlohmann::json j;
  j["family"] = to_string(family);
  if (family == Family::threshold) j["threshold"] = threshold;
  if (family == Family::orchestrated) j["bonus"] = bonus;
  if (family == Family::noisy) {
    j["sigma"] = sigma;
    j["noise_seed"] = noise_seed;
  }
  j["topology"] = masattr::to_string(topology.kind());
  for (const auto& e : topology.edges()) j["edges"].push_back({e.from, e.to});
  if (auto h = topology.hub()) j["hub"] = *h;
  for (const auto& a : profile.per_agent)
    j["profile"].push_back({{"skill", a.skill}, {"substitute_skill", a.substitute_skill}, {"token_cost", a.token_cost}});
  return j.dump();
}

SyntheticGameSpec SyntheticGameSpec::additive(Topology topology, std::span<const double> skills) {
  SyntheticGameSpec s;
  s.family = Family::additive;
  s.topology = std::move(topology);
  for (double w : skills) s.profile.per_agent.push_back({w, 0.0, 0});
  s.validate();
  return s;
}

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t noise_stream(const SyntheticGameSpec& spec, const Coalition& coalition,
                           std::span<const RoleProtocol> roles, const std::string& task, std::int64_t seed) {
  std::uint64_t h = fnv1a(task);
  h = fnv1a(std::to_string(seed), h);
  h = fnv1a(std::to_string(coalition.mask()), h);
  h = fnv1a(std::to_string(spec.noise_seed), h);
  for (const auto& r : roles) h = fnv1a(r.describe(), h);
  return h;
}

}  // namespace

SynthOutcome synth_evaluate(const SyntheticGameSpec& spec, const Coalition& coalition,
                            std::span<const RoleProtocol> role_impls, const std::string& task, std::int64_t seed) {
  const std::size_t n = spec.size();
  if (role_impls.size() != n || coalition.width() != n)
    throw std::invalid_argument("role implementations do not match the synthetic game size");

  SynthOutcome out;
  double total = 0.0;
  std::size_t positive = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cap = spec.profile.per_agent[i];
    double eff = 0.0;
    switch (role_impls[i].variant) {
      case StandIn::original:
        eff = cap.skill;
        out.tokens += cap.token_cost;
        break;
      case StandIn::replacement: eff = cap.substitute_skill; break;
      case StandIn::null_ablation:
      case StandIn::simulated_null: break;
    }
    total += eff;
    if (eff > 0.0) ++positive;
  }

  switch (spec.family) {
    case Family::additive: out.score = total; break;
    case Family::threshold: out.score = positive >= spec.threshold ? 1.0 : 0.0; break;
    case Family::orchestrated: {
      const auto hub = spec.topology.hub();
      if (!hub) {
        out.score = total;
        break;
      }
      const auto v = role_impls[*hub].variant;
      if (v == StandIn::null_ablation || v == StandIn::simulated_null) {
        out.score = 0.0;
      } else {
        out.score = total + spec.bonus;
      }
      break;
    }
    case Family::noisy: {
      std::mt19937_64 rng(noise_stream(spec, coalition, role_impls, task, seed));
      std::normal_distribution<double> noise(0.0, 1.0);
      out.score = total + spec.sigma * noise(rng);
      break;
    }
  }
  return out;
}

SyntheticEvaluator::SyntheticEvaluator(SyntheticGameSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

Trace SyntheticEvaluator::evaluate(const Coalition& coalition, std::span<const RoleProtocol> role_impls,
                                   const std::string& task, std::int64_t seed) const {
  const auto o = synth_evaluate(spec_, coalition, role_impls, task, seed);
  Trace t;
  t.score = o.score;
  t.prompt_tokens = o.tokens;
  t.billable_tokens = o.tokens;
  return t;
}

std::string SyntheticEvaluator::digest() const { return sha256_hex("synthetic:" + spec_.canonical()); }

Game make_synthetic_game(const SyntheticGameSpec& spec, std::vector<std::string> labels) {
  return make_game(spec.topology, std::make_shared<SyntheticEvaluator>(spec), std::move(labels));
}

namespace {

// Characteristic function evaluated straight from the family rules.
class DirectGame {
 public:
  DirectGame(const SyntheticGameSpec& spec, const ProtocolVector& protocol, const OracleQuery& q)
      : spec_(spec), protocol_(protocol), q_(q), n_(spec.size()) {}

  double operator()(std::uint64_t mask) {
    if (auto it = memo_.find(mask); it != memo_.end()) return it->second;
    const double v = compute(mask);
    memo_[mask] = v;
    return v;
  }

 private:
  double compute(std::uint64_t mask) {
    if (mask == 0) return q_.empty_value;
    std::vector<RoleProtocol> roles(n_);
    for (std::size_t k = 0; k < n_; ++k) roles[k] = ((mask >> k) & 1U) ? RoleProtocol::original() : protocol_[k];
    for (auto hub : {spec_.topology.orchestrator(), spec_.topology.aggregator()}) {
      if (hub && roles[*hub].variant == StandIn::null_ablation) {
        if (q_.policy.mode == ExecutabilityPolicy::Mode::skip_with_error)
          throw EvaluationError("oracle hit a non-executable coalition");
        return q_.policy.mode == ExecutabilityPolicy::Mode::baseline ? q_.policy.value : 0.0;
      }
    }
    const Coalition c(n_, mask);
    double sum = 0.0;
    for (const auto& t : q_.tasks)
      for (auto s : q_.seeds) sum += synth_evaluate(spec_, c, roles, t, s).score;
    return sum / static_cast<double>(q_.tasks.size() * q_.seeds.size());
  }

  const SyntheticGameSpec& spec_;
  const ProtocolVector& protocol_;
  const OracleQuery& q_;
  std::size_t n_;
  std::map<std::uint64_t, double> memo_;
};

template <typename Value, typename Accept>
std::vector<double> average_over_orders(std::size_t n, Value&& value, Accept&& accept) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> sum(n, 0.0);
  std::size_t count = 0;
  do {
    if (!accept(order)) continue;
    ++count;
    std::uint64_t s = 0;
    double prev = value(s);
    for (auto i : order) {
      s |= std::uint64_t{1} << i;
      const double cur = value(s);
      sum[i] += cur - prev;
      prev = cur;
    }
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& x : sum) x /= static_cast<double>(count);
  return sum;
}

// Union-find components of the undirected graph restricted to `mask`.
std::vector<std::uint64_t> components(std::uint64_t mask, std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : edges) {
    if (((mask >> e.from) & 1U) && ((mask >> e.to) & 1U)) parent[find(e.from)] = find(e.to);
  }
  std::map<std::size_t, std::uint64_t> by_root;
  for (std::size_t i = 0; i < n; ++i)
    if ((mask >> i) & 1U) by_root[find(i)] |= std::uint64_t{1} << i;
  std::vector<std::uint64_t> out;
  for (const auto& [_, m] : by_root) out.push_back(m);
  return out;
}

}  // namespace

std::vector<double> expected_attribution_oracle(const SyntheticGameSpec& spec, const KernelSpec& kernel,
                                                const ProtocolVector& protocol, const OracleQuery& query) {
  spec.validate();
  const std::size_t n = spec.size();
  if (n > kOracleMaxAgents)
    throw std::invalid_argument("brute-force oracle supports at most " + std::to_string(kOracleMaxAgents) + " agents");
  if (protocol.size() != n) throw std::invalid_argument("protocol length differs from agent count");
  kernel.validate(n);

  DirectGame v(spec, protocol, query);
  auto any_order = [](const std::vector<std::size_t>&) { return true; };
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;

  switch (kernel.kind) {
    case KernelKind::loo: {
      std::vector<double> out(n);
      for (std::size_t i = 0; i < n; ++i) out[i] = v(full) - v(full & ~(std::uint64_t{1} << i));
      return out;
    }
    case KernelKind::shapley_exact:
    case KernelKind::shapley_sampled: return average_over_orders(n, v, any_order);
    case KernelKind::owen: {
      std::vector<std::size_t> group_of(n);
      for (std::size_t g = 0; g < kernel.groups->size(); ++g)
        for (auto i : (*kernel.groups)[g]) group_of[i] = g;
      // Orders in which every group's members are contiguous.
      auto contiguous = [&](const std::vector<std::size_t>& order) {
        std::vector<bool> closed(kernel.groups->size(), false);
        for (std::size_t k = 0; k < order.size(); ++k) {
          const auto g = group_of[order[k]];
          if (closed[g]) return false;
          if (k + 1 == order.size() || group_of[order[k + 1]] != g) closed[g] = true;
        }
        return true;
      };
      return average_over_orders(n, v, contiguous);
    }
    case KernelKind::myerson: {
      const auto& edges = *kernel.graph;
      const double base = query.empty_value;
      auto restricted = [&](std::uint64_t s) {
        if (s == 0) return base;
        double total = base;
        for (auto c : components(s, n, edges)) total += v(c) - base;
        return total;
      };
      return average_over_orders(n, restricted, any_order);
    }
  }
  throw std::invalid_argument("unsupported kernel");
}

}  // namespace masattr::synth
