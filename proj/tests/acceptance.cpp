// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "json.hpp"
#include "masattr/cache_store.hpp"
#include "masattr/kernels.hpp"
#include "masattr/llm.hpp"
#include "masattr/metrics.hpp"
#include "masattr/protocols.hpp"
#include "masattr/synth.hpp"
#include "stub_server.hpp"
#include "test_support.hpp"

using namespace masattr;
using namespace masattr::synth;
using masattr::testing::one_run;
using masattr::testing::orchestrated_spec;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  // Records the first failure; later ones only count.
  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (pass) detail << "first failure: " << what << "; ";
    pass = false;
    ++failures;
  }
  int failures = 0;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

Topology topology_for(int k, std::size_t n) {
  switch (k % 4) {
    case 0: return Topology::independent(n, 0);
    case 1: return Topology::centralized(n, 0);
    case 2: return Topology::decentralized(n);
    default: return Topology::hybrid(n, 0, Topology::default_peer_edges(n, 0));
  }
}

std::vector<Edge> complete_graph(std::size_t n) {
  std::vector<Edge> e;
  for (AgentIndex i = 0; i < n; ++i)
    for (AgentIndex j = i + 1; j < n; ++j) e.push_back({i, j});
  return e;
}

std::vector<double> table_of(const CoalitionGame& cg) {
  const std::size_t n = cg.size();
  std::vector<double> v(std::size_t{1} << n);
  for (std::uint64_t m = 0; m < v.size(); ++m) v[m] = cg.utility(Coalition(n, m));
  return v;
}

double max_gap(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double g = 0;
  for (std::size_t i = 0; i < a.size(); ++i) g = std::max(g, std::abs(a[i] - b[i]));
  return g;
}

std::vector<double> shapley_of_table(std::size_t n, const std::vector<double>& v) {
  const auto g = masattr::testing::table_game(n, [v](std::uint64_t m) { return v[m]; });
  return attribute_shapley_exact(CoalitionGame(g, make_ablation_protocol(g), one_run())).scores;
}

// Random synthetic game. Outside the noisy family, agent 1 has no skill at
// all and agents n-2, n-1 share one capability, so a symmetric pair (and,
// under ablation, a null player) exists by construction.
SyntheticGameSpec axiom_spec(std::mt19937_64& rng, std::size_t n, Family family, int topo) {
  std::uniform_real_distribution<double> u(0.0, 0.3);
  SyntheticGameSpec s;
  s.family = family;
  s.topology = topology_for(topo, n);
  s.threshold = 1 + rng() % (n - 1);
  s.bonus = u(rng);
  s.sigma = 0.05;
  s.noise_seed = rng();
  for (std::size_t i = 0; i < n; ++i) {
    const double skill = 0.01 + u(rng);
    s.profile.per_agent.push_back({skill, std::min(skill, u(rng)), static_cast<std::int64_t>(10 + rng() % 90)});
  }
  if (family != Family::noisy) {
    s.profile.per_agent[1] = {0.0, 0.0, 5};
    s.profile.per_agent[n - 1] = s.profile.per_agent[n - 2];
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

Verdict criterion_axioms() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  const Family families[] = {Family::additive, Family::threshold, Family::orchestrated, Family::noisy};
  int games = 0, pairs = 0, nulls = 0;
  for (int g = 0; g < 24; ++g) {
    const Family family = families[g % 4];
    const std::size_t n = 4 + static_cast<std::size_t>(g / 4) % 3;
    const auto spec = axiom_spec(rng, n, family, g / 4);
    const auto game = make_synthetic_game(spec);
    const auto protocol = (g / 2) % 2 ? make_replacement_protocol(game, {}, "sub") : make_ablation_protocol(game);
    const CoalitionGame cg(game, protocol, one_run());
    const auto phi = attribute_shapley_exact(cg).scores;
    const auto tab = table_of(cg);
    const std::uint64_t full = Coalition::full_mask(n);
    const std::string tag = to_string(family) + " n=" + std::to_string(n) + " game " + std::to_string(g);
    ++games;

    // Efficiency.
    double sum = 0;
    for (double x : phi) sum += x;
    v.require(std::abs(sum - (tab[full] - tab[0])) <= 1e-9, "efficiency on " + tag);

    // Symmetry on every pair the characteristic function makes interchangeable.
    for (AgentIndex i = 0; i < n; ++i)
      for (AgentIndex j = i + 1; j < n; ++j) {
        const std::uint64_t bi = std::uint64_t{1} << i, bj = std::uint64_t{1} << j;
        bool symmetric = true;
        for (std::uint64_t m = 0; m <= full && symmetric; ++m)
          if (!(m & (bi | bj))) symmetric = std::abs(tab[m | bi] - tab[m | bj]) <= 1e-12;
        if (!symmetric) continue;
        ++pairs;
        v.require(std::abs(phi[i] - phi[j]) <= 1e-9, "symmetry of " + std::to_string(i) + "," + std::to_string(j) + " on " + tag);
      }

    // Dummy: a constant marginal c must be paid exactly c.
    for (AgentIndex i = 0; i < n; ++i) {
      const std::uint64_t bi = std::uint64_t{1} << i;
      const double c = tab[bi] - tab[0];
      bool dummy = true;
      for (std::uint64_t m = 0; m <= full && dummy; ++m)
        if (!(m & bi)) dummy = std::abs(tab[m | bi] - tab[m] - c) <= 1e-12;
      if (!dummy) continue;
      ++nulls;
      v.require(std::abs(phi[i] - c) <= 1e-9, "dummy " + std::to_string(i) + " on " + tag);
    }
    // Under replacement the empty coalition keeps its conventional value, so
    // a skill-less agent is only guaranteed null under ablation.
    const bool ablated = (g / 2) % 2 == 0;
    if (family != Family::noisy && ablated) {
      const std::uint64_t b1 = 2;
      bool null1 = true;
      for (std::uint64_t m = 0; m <= full; ++m)
        if (!(m & b1) && tab[m | b1] != tab[m]) null1 = false;
      v.require(null1, "constructed null player missing on " + tag);
    }

    // Anonymity: relabelling the players relabels the values.
    std::vector<AgentIndex> perm(n);
    std::iota(perm.begin(), perm.end(), AgentIndex{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> permuted(tab.size());
    for (std::uint64_t m = 0; m <= full; ++m) {
      std::uint64_t image = 0;
      for (AgentIndex i = 0; i < n; ++i)
        if (m >> i & 1) image |= std::uint64_t{1} << perm[i];
      permuted[m] = tab[image];
    }
    const auto phi_perm = shapley_of_table(n, permuted);
    for (AgentIndex i = 0; i < n; ++i)
      v.require(std::abs(phi_perm[i] - phi[perm[i]]) <= 1e-9, "anonymity on " + tag);

    // Dummy on a derived game: the same table plus a player worth 0.07 everywhere.
    if (n < 6) {
      std::vector<double> ext(tab.size() * 2);
      for (std::uint64_t m = 0; m < ext.size(); ++m) ext[m] = tab[m & full] + ((m >> n) & 1 ? 0.07 : 0.0);
      const auto phi_ext = shapley_of_table(n + 1, ext);
      v.require(std::abs(phi_ext[n] - 0.07) <= 1e-9, "added dummy on " + tag);
      for (AgentIndex i = 0; i < n; ++i) v.require(std::abs(phi_ext[i] - phi[i]) <= 1e-9, "added dummy shifts others on " + tag);
      ++nulls;
    }

    // Owen with trivial partitions and Myerson on the complete graph.
    Partition singletons, whole(1);
    for (AgentIndex i = 0; i < n; ++i) {
      singletons.push_back({i});
      whole[0].push_back(i);
    }
    v.require(max_gap(attribute_owen(cg, singletons).scores, phi) <= 1e-9, "owen singletons on " + tag);
    v.require(max_gap(attribute_owen(cg, whole).scores, phi) <= 1e-9, "owen whole set on " + tag);
    const auto k = complete_graph(n);
    v.require(max_gap(attribute_myerson(cg, k).scores, phi) <= 1e-9, "myerson complete graph on " + tag);
  }
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + fmt(secs) + " s");
  v.require(pairs >= 18 && nulls >= 18, "too few symmetric pairs or dummies exercised");
  v.detail << games << " games (4 families, n=4..6), " << pairs << " symmetric pairs, " << nulls
           << " dummies, " << fmt(secs) << " s";
  return v;
}

Verdict criterion_counts() {
  Verdict v;
  for (std::size_t n = 2; n <= 8; ++n) {
    std::vector<double> w(n, 0.1);
    const auto spec = SyntheticGameSpec::additive(Topology::decentralized(n), w);
    const auto game = make_synthetic_game(spec);
    const auto p = make_ablation_protocol(game);
    const std::string tag = " (n=" + std::to_string(n) + ")";
    const std::size_t all = (std::size_t{1} << n) - 1;

    const CoalitionGame a(game, p, one_run());
    const auto loo = attribute_loo(a);
    v.require(loo.coalition_evaluations == n + 1 && a.evaluator_calls() == static_cast<std::int64_t>(n + 1),
              "loo count" + tag);

    const CoalitionGame b(game, p, one_run());
    const auto sh = attribute_shapley_exact(b);
    v.require(sh.coalition_evaluations == all && b.evaluator_calls() == static_cast<std::int64_t>(all),
              "shapley count" + tag);
    const auto before = b.evaluator_calls();
    Partition ow{{0}, {}};
    for (AgentIndex i = 1; i < n; ++i) ow[1].push_back(i);
    const auto owen = attribute_owen(b, ow);
    v.require(owen.coalition_evaluations == all, "owen count" + tag);
    v.require(b.evaluator_calls() == before, "owen added cache misses" + tag);
  }
  // Star around agent 0 with five leaves.
  const std::size_t n = 6;
  const auto spec = orchestrated_spec(n);
  const auto game = make_synthetic_game(spec);
  const CoalitionGame cg(game, make_replacement_protocol(game, {}, "sub"), one_run());
  std::vector<Edge> star;
  for (AgentIndex i = 1; i < n; ++i) star.push_back({0, i});
  const auto my = attribute_myerson(cg, star);
  v.require(my.coalition_evaluations == 37 && cg.evaluator_calls() == 37,
            "myerson star gave " + std::to_string(my.coalition_evaluations));
  v.detail << "loo n+1, shapley and owen 2^n-1 with 0 new misses for n=2..8; myerson star(6) "
           << my.coalition_evaluations;
  return v;
}

Verdict criterion_oracle() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  const Family families[] = {Family::additive, Family::threshold, Family::orchestrated, Family::noisy};
  int comparisons = 0;
  for (std::size_t n : {3, 5, 8}) {
    for (int topo = 0; topo < 4; ++topo) {
      SyntheticGameSpec spec;
      spec.family = families[(topo + n) % 4];
      spec.topology = topology_for(topo, n);
      spec.threshold = 1 + rng() % n;
      spec.bonus = u(rng);
      spec.sigma = 0.04;
      spec.noise_seed = rng();
      for (std::size_t i = 0; i < n; ++i) {
        const double s = u(rng);
        spec.profile.per_agent.push_back({s, std::min(s, u(rng)), static_cast<std::int64_t>(10 + rng() % 90)});
      }
      const auto game = make_synthetic_game(spec);
      Partition groups(2);
      for (AgentIndex i = 0; i < n; ++i) groups[i * 2 < n ? 0 : 1].push_back(i);
      const std::vector<KernelSpec> kernels{KernelSpec::loo(), KernelSpec::shapley_exact(), KernelSpec::owen(groups),
                                            KernelSpec::myerson(spec.topology.edges())};
      for (const auto& p : {make_ablation_protocol(game), make_replacement_protocol(game, {}, "sub")}) {
        OracleQuery q;
        q.tasks = {"t0", "t1"};
        q.seeds = {0, 1};
        EvaluationSpec es;
        es.tasks = q.tasks;
        es.seeds = q.seeds;
        const CoalitionGame cg(game, p, es, q.policy);
        for (const auto& k : kernels) {
          const auto got = attribute(k, cg).scores;
          const auto want = expected_attribution_oracle(spec, k, p, q);
          ++comparisons;
          v.require(max_gap(got, want) <= 1e-9, to_string(k.kind) + " vs oracle, n=" + std::to_string(n) + " " +
                                                    to_string(spec.topology.kind()) + " " + p.canonical());
        }
      }
    }
  }

  // Sampled Shapley against the exact value on a game with real variance.
  SyntheticGameSpec spec;
  spec.family = Family::threshold;
  spec.threshold = 4;
  spec.topology = Topology::decentralized(8);
  for (int i = 0; i < 8; ++i) spec.profile.per_agent.push_back({i % 3 ? 0.2 : 0.0, 0.0, 10});
  const auto game = make_synthetic_game(spec);
  const CoalitionGame cg(game, make_ablation_protocol(game), one_run());
  const auto exact = attribute_shapley_exact(cg).scores;
  const auto sampled = attribute_shapley_sampled(cg, 50000, 99);
  double worst = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    const double gap = std::abs(sampled.scores[i] - exact[i]);
    // Zero-variance agents are exact; allow only float rounding there.
    v.require(gap <= 3 * sampled.standard_errors[i] + 1e-12, "sampled agent " + std::to_string(i) + " off by " +
                                                                   fmt(gap) + " with SE " + fmt(sampled.standard_errors[i]));
    if (sampled.standard_errors[i] > 0) worst = std::max(worst, gap / sampled.standard_errors[i]);
  }
  const double secs = seconds_since(t0);
  v.require(secs < 300.0, "runtime " + fmt(secs) + " s");
  v.detail << comparisons << " kernel/oracle comparisons (n=3,5,8; 4 topologies; ablation+replacement); "
           << "sampled n=8 budget 50000 worst gap " << fmt(worst) << " SE; " << fmt(secs) << " s";
  return v;
}

Verdict criterion_orchestrator() {
  Verdict v;
  for (std::size_t n : {4, 6, 8}) {
    const auto spec = orchestrated_spec(n);
    const auto game = make_synthetic_game(spec);
    const CoalitionGame abl(game, make_ablation_protocol(game), one_run());
    const CoalitionGame rep(game, make_replacement_protocol(game, {}, "sub"), one_run());
    const auto a = attribute_shapley_exact(abl), r = attribute_shapley_exact(rep);
    const double ha = normalized_entropy(a), hr = normalized_entropy(r);
    const std::string tag = " (n=" + std::to_string(n) + ")";
    v.require(ha < hr, "entropy ablation " + fmt(ha) + " >= replacement " + fmt(hr) + tag);
    v.require(rank_ascending(a.scores).back() == 0, "orchestrator not top under ablation" + tag);
    v.require(rank_ascending(r.scores).back() != 0, "orchestrator top under replacement" + tag);
    if (n == 6) v.detail << "n=6 entropy ablation " << fmt(ha) << " < replacement " << fmt(hr) << "; ";
  }
  v.detail << "orchestrator top under ablation only, n=4,6,8";
  return v;
}

Verdict criterion_deletion() {
  Verdict v;
  struct Hand {
    std::vector<double> u;
    double auc;
  };
  const std::vector<Hand> hand{{{1.0, 0.5, 0.0}, 0.5},
                               {{1.0, 1.0, 1.0}, 1.0},
                               {{0.0, 1.0}, 0.5},
                               {{1.0, 0.5, 0.5, 0.0}, 0.5},
                               {{0.2, 0.4, 0.6, 0.8, 1.0}, 0.6},
                               {{0.9, 0.3, 0.6, 0.0, 0.0}, 0.3375},
                               {{0.7}, 0.7}};
  for (const auto& h : hand)
    v.require(std::abs(trapezoid_auc(h.u) - h.auc) <= 1e-12, "auc of a hand curve " + fmt(trapezoid_auc(h.u)));

  std::size_t curves = 0;
  for (std::size_t n = 3; n <= 8; ++n) {
    const auto game = make_synthetic_game(orchestrated_spec(n));
    const CoalitionGame rep(game, make_replacement_protocol(game, {}, "sub"), one_run());
    for (const auto& scores : {attribute_shapley_exact(rep), attribute_loo(rep)}) {
      const auto c = deletion_curve(rep, scores, n);
      for (std::size_t k = 1; k < c.points.size(); ++k)
        v.require(c.points[k].billable_tokens <= c.points[k - 1].billable_tokens,
                  "billable tokens rose at k=" + std::to_string(k) + " n=" + std::to_string(n));
      ++curves;
    }
  }
  v.detail << hand.size() << " hand curves exact to 1e-12; " << curves
           << " replacement curves with non-increasing billable tokens";
  return v;
}

Verdict criterion_agreement() {
  Verdict v;
  const std::size_t n = 4;
  const std::vector<double> w{0.05, 0.1, 0.15, 0.2};
  const auto truth_game = make_synthetic_game(SyntheticGameSpec::additive(Topology::decentralized(n), w));
  const std::vector<std::string> tasks{"need1", "need2", "need3", "need4"};
  EvaluationSpec es;
  es.tasks = tasks;
  es.seeds = {0};
  const CoalitionGame truth(truth_game, make_ablation_protocol(truth_game), es);
  const auto coalitions = kernel_coalitions(KernelSpec::shapley_exact(), n);
  std::vector<double> ref;
  for (const auto& c : coalitions) ref.push_back(truth.utility(c));

  const auto self = agreement(ref, ref);
  v.require(self.r_squared && std::abs(*self.r_squared - 1.0) <= 1e-12, "self R^2");
  v.require(self.spearman_rho && std::abs(*self.spearman_rho - 1.0) <= 1e-12, "self rho");

  std::vector<double> distinct{0.3, 0.1, 0.7, 0.2, 0.9}, reversed;
  for (double x : distinct) reversed.push_back(1.0 - x);
  const auto rho_rev = spearman(distinct, reversed);
  v.require(rho_rev && std::abs(*rho_rev + 1.0) <= 1e-12, "reversed rho");

  // Over-generous judge: task "needK" succeeds once any K agents are active.
  auto judge = std::make_shared<masattr::testing::StubJudge>([](const std::string& user) {
    std::size_t active = 0;
    for (auto p = user.find("[ACTIVE]"); p != std::string::npos; p = user.find("[ACTIVE]", p + 1)) ++active;
    const auto at = user.find("Task: need");
    const std::size_t need = static_cast<std::size_t>(user[at + 10] - '0');
    return masattr::testing::verdict(active >= need ? 1 : 0);
  });
  JudgeBinding binding;
  binding.judge = judge;
  binding.transcripts = masattr::testing::stub_transcripts(n, tasks);
  for (auto& [id, t] : binding.transcripts) t.task = id;
  std::vector<AgentId> ids;
  for (AgentIndex i = 0; i < n; ++i) ids.push_back({i, "agent_" + std::to_string(i)});
  auto evaluator = std::make_shared<IntrospectiveEvaluator>(binding, ids, std::nullopt);
  const auto judged_game = make_game(Topology::decentralized(n), evaluator);
  const CoalitionGame judged(judged_game, make_introspective_protocol(judged_game), es);
  std::vector<double> cand;
  for (const auto& c : coalitions) cand.push_back(judged.utility(c));
  const auto rep = agreement(cand, ref);
  v.require(rep.r_squared && *rep.r_squared < 0, "miscalibrated judge R^2 not negative");
  v.require(rep.spearman_rho && *rep.spearman_rho > 0, "miscalibrated judge rho not positive");
  v.detail << "self (1, 1); reversed rho -1; miscalibrated judge R^2 " << fmt(rep.r_squared.value_or(NAN))
           << ", rho " << fmt(rep.spearman_rho.value_or(NAN)) << " over " << rep.paired << " coalitions";
  return v;
}

Verdict criterion_entropy() {
  Verdict v;
  const std::vector<double> uniform{0.25, 0.25, 0.25, 0.25}, onehot{0, 0, 1, 0}, half{0.5, 0.5, 0, 0};
  v.require(std::abs(normalized_entropy(uniform) - 1.0) <= 1e-12, "uniform");
  v.require(std::abs(normalized_entropy(onehot) - 0.0) <= 1e-12, "one-hot");
  v.require(std::abs(normalized_entropy(half) - 0.5) <= 1e-12, "(0.5, 0.5, 0, 0)");
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> x(-1.0, 1.0), scale(-50.0, 50.0);
  int trials = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(2 + t % 7);
    for (auto& e : s) e = x(rng);
    double c = scale(rng);
    if (std::abs(c) < 1e-3) c = 1.5;
    std::vector<double> cs;
    for (double e : s) cs.push_back(c * e);
    v.require(std::abs(normalized_entropy(s) - normalized_entropy(cs)) <= 1e-12, "scale invariance");
    ++trials;
  }
  v.detail << "uniform 1, one-hot 0, half 0.5; scale invariance on " << trials << " random vectors";
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict criterion_resume() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / ("masattr-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);

  // Library level: a Shapley run dies mid-way and is resumed from its log.
  const auto spec = orchestrated_spec(6);
  const auto run = [&](std::shared_ptr<CacheStore> cache) {
    const auto g = make_synthetic_game(spec);
    const CoalitionGame cg(g, make_replacement_protocol(g, {}, "sub"), EvaluationSpec{{"t0", "t1"}, {0, 1}},
                           ExecutabilityPolicy::zero_utility(), cache);
    const auto r = attribute_shapley_exact(cg);
    return std::pair{r.scores, cg.evaluator_calls()};
  };
  const auto [cold_scores, cold_calls] = run(std::make_shared<CacheStore>());
  const fs::path log = root / "shapley.log";
  const int survive = 57;
  const pid_t pid = ::fork();
  if (pid == 0) {
    struct Dying final : CoalitionEvaluator {
      std::shared_ptr<const CoalitionEvaluator> inner;
      mutable int left = survive;
      Trace evaluate(const Coalition& c, std::span<const RoleProtocol> r, const std::string& t,
                     std::int64_t s) const override {
        if (left-- == 0) std::_Exit(0);
        return inner->evaluate(c, r, t, s);
      }
      std::string digest() const override { return inner->digest(); }
    };
    auto g = make_synthetic_game(spec);
    auto dying = std::make_shared<Dying>();
    dying->inner = g.evaluator;
    g.evaluator = dying;
    const CoalitionGame cg(g, make_replacement_protocol(g, {}, "sub"), EvaluationSpec{{"t0", "t1"}, {0, 1}},
                           ExecutabilityPolicy::zero_utility(), std::make_shared<CacheStore>(log));
    (void)attribute_shapley_exact(cg);
    std::_Exit(1);
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  v.require(pid > 0 && WIFEXITED(status) && WEXITSTATUS(status) == 0, "child did not die mid-run");
  std::int64_t resumed_calls = -1;
  {
    auto cache = std::make_shared<CacheStore>(log);
    v.require(cache->size() == static_cast<std::size_t>(survive), "log holds " + std::to_string(cache->size()) + " records");
    const auto [scores, calls] = run(cache);
    resumed_calls = calls;
    v.require(calls + survive == cold_calls, "killed + resumed calls differ from a cold run");
    v.require(scores == cold_scores, "resumed scores differ");
  }

  // CLI level: warm rerun of a Shapley query.
  nlohmann::json profile = nlohmann::json::array();
  for (const auto& a : spec.profile.per_agent)
    profile.push_back({{"skill", a.skill}, {"substitute_skill", a.substitute_skill}, {"token_cost", a.token_cost}});
  const nlohmann::json q = {
      {"game", {{"topology", {{"kind", "centralized"}, {"orchestrator", 0}}},
                {"synthetic", {{"family", "orchestrated"}, {"bonus", spec.bonus}, {"profile", profile}}}}},
      {"protocol", {{"kind", "replacement"}, {"substitute", "sub"}}},
      {"kernel", {{"kind", "shapley"}}},
      {"cache", "cache.log"},
      {"output", "reports"}};
  std::ofstream(root / "query.json") << q.dump(2);
  cli::Options o;
  o.command = cli::Command::delete_curve;
  o.config = root / "query.json";
  std::ostringstream sink;
  try {
    const auto cold = cli::execute(o, sink);
    std::map<std::string, std::string> bytes;
    for (const auto& e : fs::directory_iterator(cold.report_dir))
      if (e.path().filename() != "run_stats.json") bytes[e.path().filename().string()] = slurp(e.path());
    const auto warm = cli::execute(o, sink);
    v.require(cold.evaluator_calls > 0, "cold CLI run made no calls");
    v.require(warm.evaluator_calls == 0, "warm CLI run made " + std::to_string(warm.evaluator_calls) + " calls");
    for (const auto& [name, b] : bytes) v.require(slurp(warm.report_dir / name) == b, name + " changed on rerun");
    v.detail << "killed after " << survive << " of " << cold_calls << " calls, resumed with " << resumed_calls
             << "; warm CLI rerun 0 calls, " << bytes.size() << " report files byte-identical";
  } catch (const std::exception& e) {
    v.require(false, std::string("CLI run threw: ") + e.what());
  }
  fs::remove_all(root);
  return v;
}

Verdict criterion_adapter() {
  using namespace masattr::llm;
  using masattr::testing::completion_body;
  using masattr::testing::StubServer;
  Verdict v;
  ::setenv("MASATTR_ACCEPTANCE_KEY", "sk-local", 1);
  const auto endpoint = [](const StubServer& s) {
    ModelEndpoint e;
    e.base_url = s.base_url();
    e.model = "stub-model";
    e.api_key_env = "MASATTR_ACCEPTANCE_KEY";
    e.timeout_s = 5;
    e.backoff_base = std::chrono::milliseconds(1);
    e.backoff_cap = std::chrono::milliseconds(5);
    return e;
  };
  try {
    {
      StubServer s({{200, completion_body("hi", 321, 45), {}}});
      const auto r = ChatClient(endpoint(s)).chat({{"user", "x"}});
      v.require(r.prompt_tokens == 321 && r.completion_tokens == 45, "token passthrough");
    }
    {
      StubServer s({{500, "{}", {}}, {503, "{}", {}}, {200, completion_body("ok", 1, 1), {}}});
      const auto r = ChatClient(endpoint(s)).chat({{"user", "x"}});
      v.require(r.text == "ok" && s.hits() == 3, "retry on 5xx");
    }
    {
      StubServer s({{401, "{}", {}}});
      bool auth = false;
      try {
        (void)ChatClient(endpoint(s)).chat({{"user", "x"}});
      } catch (const AuthError&) {
        auth = true;
      }
      v.require(auth && s.hits() == 1, "401 retried or not raised as auth error");
    }
    {
      std::vector<AgentTranscript> ts;
      for (AgentIndex i = 0; i < 3; ++i) ts.push_back({{i, "a" + std::to_string(i)}, "m" + std::to_string(i)});
      const auto msgs = render_judge_prompt("Plan", ts, Coalition::of(3, {0, 2}), 0);
      v.require(msgs == render_judge_prompt("Plan", ts, Coalition::of(3, {0, 2}), 0), "prompt not deterministic");
      v.require(msgs.at(1).content ==
                    "Task: Plan\n"
                    "Lead transcript [ACTIVE]: m0\n"
                    "Per-agent transcripts:\n"
                    "- Agent 1 (a1) [ABLATED]: m1\n"
                    "- Agent 2 (a2) [ACTIVE]: m2\n"
                    "Instruction: disregard agents 1; consider only 0, 2.\n"
                    "Counterfactually, would the task succeed using only the active agents?\n"
                    "Reply as JSON: {\"success\": 0/1, \"reasoning\": \"...\"}.",
                "judge prompt bytes");
      StubServer s({{200, completion_body(R"({"success": 0, "reasoning": "no"})", 1, 1), {}},
                    {200, completion_body(R"({"success": 0, "reasoning": "no"})", 1, 1), {}}});
      ChatClient c(endpoint(s));
      (void)c.chat(msgs);
      (void)c.chat(msgs);
      v.require(s.bodies().size() == 2 && s.bodies()[0] == s.bodies()[1], "request bytes differ between calls");
    }
    v.require(parse_judge_verdict(R"({"success": 1, "reasoning": "y"})")->success == 1, "verdict 1");
    v.require(parse_judge_verdict(R"({"success": 0, "reasoning": "n"})")->success == 0, "verdict 0");
    for (const char* bad : {R"({"success": 2, "reasoning": "x"})", R"({"success": true, "reasoning": "x"})",
                            R"({"success": 0.5, "reasoning": "x"})", "no json"})
      v.require(!parse_judge_verdict(bad), std::string("accepted ") + bad);
  } catch (const std::exception& e) {
    v.require(false, std::string("threw: ") + e.what());
  }
  v.detail << "token passthrough, 5xx retry, no retry on 401, stable prompt bytes, verdict parsing (local stub only)";
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"1 axioms", criterion_axioms},
      {"2 coalition counts", criterion_counts},
      {"3 oracle equivalence", criterion_oracle},
      {"4 orchestrator concentration", criterion_orchestrator},
      {"5 deletion curves", criterion_deletion},
      {"6 agreement", criterion_agreement},
      {"7 entropy", criterion_entropy},
      {"8 cache resume", criterion_resume},
      {"9 adapter conformance", criterion_adapter},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.require(false, std::string("threw: ") + e.what());
    }
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << name << ": " << v.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
