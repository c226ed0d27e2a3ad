#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "masattr/cache_store.hpp"
#include "masattr/errors.hpp"
#include "masattr/metrics.hpp"

namespace masattr::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Offline judge with a fixed verdict; no tokens, no network.
class ConstantJudge final : public llm::ChatBackend {
 public:
  explicit ConstantJudge(int success) : success_(success) {}
  llm::ChatReply chat(const std::vector<llm::ChatMessage>&) const override {
    return {R"({"success": )" + std::to_string(success_) + R"(, "reasoning": "constant judge"})", 0, 0, model()};
  }
  std::string model() const override { return "constant:" + std::to_string(success_); }

 private:
  int success_;
};

// Runtime objects behind one protocol of the query.
struct Bound {
  std::string kind;
  Game game;
  ProtocolVector protocol;
  std::shared_ptr<IntrospectiveEvaluator> judge;
  std::shared_ptr<CoalitionGame> cg;
};

ProtocolVector protocol_vector(const ProtocolConfig& p, const Game& game) {
  if (p.kind == "ablation") return make_ablation_protocol(game);
  if (p.kind == "introspective") return make_introspective_protocol(game);
  return make_replacement_protocol(game, p.substitutes, p.substitute);
}

Bound bind_protocol(const QueryConfig& q, const ProtocolConfig& p, std::shared_ptr<CacheStore> cache,
           std::shared_ptr<const llm::PricingTable> pricing) {
  Bound b;
  b.kind = p.kind;
  if (p.kind == "introspective") {
    JudgeBinding binding;
    if (p.judge->kind == "constant")
      binding.judge = std::make_shared<ConstantJudge>(p.judge->success);
    else
      binding.judge = std::make_shared<llm::ChatClient>(p.judge->endpoint);
    binding.transcripts = q.game.transcripts;
    binding.max_attempts = p.judge->max_attempts;
    binding.validate(q.game.size(), q.tasks);
    std::vector<AgentId> ids;
    for (AgentIndex i = 0; i < q.game.size(); ++i) ids.push_back({i, q.game.agents[i]});
    b.judge = std::make_shared<IntrospectiveEvaluator>(binding, ids, q.game.topology.orchestrator());
    b.game = make_game(q.game.topology, b.judge, q.game.agents);
  } else {
    b.game = synth::make_synthetic_game(*q.game.synthetic, q.game.agents);
  }
  b.game.groups = q.game.groups;
  b.game.graph = q.game.graph;
  b.game.empty_value = q.game.empty_value;
  b.protocol = protocol_vector(p, b.game);
  b.cg = std::make_shared<CoalitionGame>(b.game, b.protocol, q.evaluation_spec(), q.executability, cache, pricing);
  return b;
}

std::string number(double v) { return json(v).dump(); }

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot write " + path.string());
  out << content;
  if (!out) throw StorageError("write to " + path.string() + " failed");
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

// 1 = highest score; ties keep agent order.
std::vector<std::size_t> descending_ranks(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> rank(scores.size());
  for (std::size_t r = 0; r < idx.size(); ++r) rank[idx[r]] = r + 1;
  return rank;
}

json cost_json(const CostLedger& c) {
  return {{"prompt_tokens", c.prompt_tokens},
          {"completion_tokens", c.completion_tokens},
          {"tokens", c.tokens()},
          {"billable_tokens", c.billable_tokens},
          {"cost", c.cost},
          {"executed_coalitions", c.executed_coalitions}};
}

json protocol_report(const Bound& b) {
  return {{"kind", b.kind},
          {"stand_ins", b.protocol.canonical()},
          {"digest", b.protocol.digest()},
          {"experimental", b.protocol.is_mixed()}};
}

void write_attribution(const fs::path& dir, const QueryConfig& q, const Bound& b, const AttributionResult& r) {
  const auto ranks = descending_ranks(r.scores);
  json j;
  j["agents"] = q.game.agents;
  j["scores"] = r.scores;
  if (!r.standard_errors.empty()) j["standard_errors"] = r.standard_errors;
  j["ranks"] = ranks;
  j["kernel"] = to_json(q)["kernel"];
  j["protocol"] = protocol_report(b);
  j["metric"] = to_string(q.metric);
  j["executability"] = q.executability.describe();
  j["coalition_evaluations"] = r.coalition_evaluations;
  j["cost"] = cost_json(r.cost);
  write_json(dir / "attribution.json", j);

  std::ostringstream csv;
  csv << "agent,score,rank\n";
  for (std::size_t i = 0; i < r.scores.size(); ++i)
    csv << q.game.agents[i] << ',' << number(r.scores[i]) << ',' << ranks[i] << '\n';
  write_file(dir / "attribution.csv", csv.str());
}

void write_curve(const fs::path& dir, const QueryConfig& q, const DeletionCurve& c, std::size_t k_max) {
  std::ostringstream csv;
  csv << "k,utility,tokens\n";
  json points = json::array();
  for (const auto& p : c.points) {
    csv << p.k << ',' << number(p.utility) << ',' << p.billable_tokens << '\n';
    points.push_back({{"k", p.k}, {"utility", p.utility}, {"billable_tokens", p.billable_tokens}});
  }
  write_file(dir / "curve.csv", csv.str());
  json order = json::array();
  for (auto i : c.order) order.push_back(q.game.agents[i]);
  write_json(dir / "curve.json", {{"k_max", k_max}, {"order", order}, {"points", points}, {"auc", c.auc}});
}

json members_json(const Coalition& c, const QueryConfig& q) {
  json out = json::array();
  for (auto i : c.members()) out.push_back(q.game.agents[i]);
  return out;
}

std::optional<double> entropy_or_null(const AttributionResult& r, json& flags, const std::string& which) {
  try {
    return normalized_entropy(r);
  } catch (const std::invalid_argument&) {
    flags.push_back(which + "_entropy_undefined");
    return std::nullopt;
  }
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_manifest(const fs::path& dir, const QueryConfig& q, const std::string& digest) {
  json m;
  m["tool"] = "masattr";
  m["version"] = kToolVersion;
  m["cache_format_version"] = CacheStore::kFormatVersion;
  m["query_digest"] = digest;
  m["config"] = to_json(q);
  write_json(dir / "manifest.json", m);
}

}  // namespace

RunSummary execute(const Options& options, std::ostream& log) {
  QueryConfig q = load_query(options.config);
  if (options.seed_override) {
    const auto base = *options.seed_override;
    for (std::size_t k = 0; k < q.seeds.size(); ++k) q.seeds[k] = base + static_cast<std::int64_t>(k);
    q.kernel.seed = static_cast<std::uint64_t>(base);
    if (q.compare_with && q.compare_with->kernel) q.compare_with->kernel->seed = static_cast<std::uint64_t>(base);
  }
  if (options.jobs == 0) throw ConfigError("--jobs: must be at least 1");
  const std::size_t n = q.game.size();
  if (options.k_max && *options.k_max > n)
    throw ConfigError("--k-max: " + std::to_string(*options.k_max) + " exceeds the agent count " + std::to_string(n));
  if (options.command == Command::compare_protocols && !q.compare_with)
    throw ConfigError("compare_with: compare-protocols needs a second protocol");

  const auto cache_path = options.cache ? std::optional<fs::path>(*options.cache)
                                        : (q.cache ? std::optional<fs::path>(*q.cache) : std::nullopt);
  const fs::path out_root = options.out ? *options.out : fs::path(q.output.value_or("masattr-out"));

  auto pricing_map = q.pricing;
  for (int s : {0, 1}) pricing_map.emplace("constant:" + std::to_string(s), llm::Price{});
  const auto pricing = std::make_shared<const llm::PricingTable>(pricing_map);
  auto cache = cache_path ? std::make_shared<CacheStore>(*cache_path) : std::make_shared<CacheStore>();

  const std::string digest = query_digest(q);
  const fs::path dir = out_root / digest;
  fs::create_directories(dir);

  RunSummary summary;
  summary.report_dir = dir;
  std::vector<std::shared_ptr<IntrospectiveEvaluator>> judges;
  const auto tally = [&](const Bound& b) {
    summary.evaluator_calls += b.cg->evaluator_calls();
    if (b.judge) judges.push_back(b.judge);
  };

  Bound primary = bind_protocol(q, q.protocol, cache, pricing);
  switch (options.command) {
    case Command::attribute: {
      const auto r = attribute(q.kernel, *primary.cg, options.jobs);
      write_attribution(dir, q, primary, r);
      break;
    }
    case Command::delete_curve: {
      const auto r = attribute(q.kernel, *primary.cg, options.jobs);
      write_attribution(dir, q, primary, r);
      const std::size_t k_max = options.k_max.value_or(n);
      write_curve(dir, q, deletion_curve(*primary.cg, r, k_max), k_max);
      break;
    }
    case Command::compare_protocols: {
      Bound other = bind_protocol(q, q.compare_with->protocol, cache, pricing);
      const KernelSpec other_kernel = q.compare_with->kernel.value_or(q.kernel);
      if (!q.kernel.is_exact() || !other_kernel.is_exact())
        throw ConfigError("kernel.kind: comparing protocols needs a kernel with a fixed coalition set");
      const auto coalitions = kernel_coalitions(q.kernel, n);
      if (coalitions != kernel_coalitions(other_kernel, n))
        throw ConfigError("compare_with.kernel: the two protocols would be evaluated on different coalition sets");
      primary.cg->prefetch(coalitions, options.jobs);
      other.cg->prefetch(coalitions, options.jobs);

      // Ablation is the reference whenever one side uses it.
      const bool other_is_reference = other.kind == "ablation" && primary.kind != "ablation";
      const Bound& reference = other_is_reference ? other : primary;
      const Bound& candidate = other_is_reference ? primary : other;

      json rows = json::array();
      std::vector<double> ref_values, cand_values;
      for (const auto& c : coalitions) {
        const double a = primary.cg->utility(c), b = other.cg->utility(c);
        rows.push_back({{"coalition", members_json(c, q)}, {"mask", c.mask()}, {"protocol", a}, {"compare_with", b}});
        ref_values.push_back(reference.cg->utility(c));
        cand_values.push_back(candidate.cg->utility(c));
      }

      json flags = json::array();
      std::optional<double> r2;
      try {
        r2 = r_squared(cand_values, ref_values);
        if (*r2 < 0) flags.push_back("r_squared_negative");
      } catch (const std::invalid_argument&) {
        flags.push_back("r_squared_undefined");
      }
      const auto rho = spearman(cand_values, ref_values);
      if (!rho) flags.push_back("spearman_undefined");

      const auto pr = attribute(q.kernel, *primary.cg, options.jobs);
      const auto orr = attribute(other_kernel, *other.cg, options.jobs);
      json j;
      j["reference"] = other_is_reference ? "compare_with" : "protocol";
      j["protocols"] = {{"protocol", protocol_report(primary)}, {"compare_with", protocol_report(other)}};
      j["paired"] = rows;
      j["report"] = {{"r_squared", optional_number(r2)}, {"spearman_rho", optional_number(rho)},
                     {"paired", coalitions.size()}};
      j["entropy"] = {{"protocol", optional_number(entropy_or_null(pr, flags, "protocol"))},
                      {"compare_with", optional_number(entropy_or_null(orr, flags, "compare_with"))}};
      j["scores"] = {{"protocol", pr.scores}, {"compare_with", orr.scores}};
      j["flags"] = flags;
      write_json(dir / "agreement.json", j);
      tally(other);
      break;
    }
  }
  tally(primary);
  write_manifest(dir, q, digest);

  summary.cache_entries = cache->size();
  json stats{{"evaluator_calls", summary.evaluator_calls}, {"cache_entries", summary.cache_entries}};
  std::int64_t malformed = 0, failed = 0;
  for (const auto& j : judges) {
    malformed += j->malformed_replies();
    failed += j->failed_tasks();
  }
  if (!judges.empty()) {
    stats["judge_malformed_replies"] = malformed;
    stats["judge_failed_tasks"] = failed;
  }
  // Kept apart from the reports, which stay identical across warm reruns.
  write_json(dir / "run_stats.json", stats);
  log << "reports: " << dir.string() << "\n"
      << "evaluator calls: " << summary.evaluator_calls << "\n";
  return summary;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attribution queries over multi-agent systems", "masattr"};
  app.require_subcommand(1);
  Options o;
  std::string config, cache, outdir;
  std::size_t k_max = 0;
  std::int64_t seed = 0;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "query config (JSON)")->required();
    sub->add_option("--cache", cache, "cache log path (overrides the config)");
    sub->add_option("--out", outdir, "report root (overrides the config)");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed-override", seed, "replace the seed list with N, N+1, ... and the sampling seed with N");
  };
  auto* attr = app.add_subcommand("attribute", "score every agent");
  common(attr);
  auto* curve = app.add_subcommand("delete-curve", "remove the bottom-ranked agents one at a time");
  common(curve);
  curve->add_option("--k-max", k_max, "deletions to apply (default: all agents)");
  auto* cmp = app.add_subcommand("compare-protocols", "agreement between two removal protocols");
  common(cmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "masattr: " << e.what() << "\n";
    return kExitConfig;
  }

  o.command = attr->parsed() ? Command::attribute : (curve->parsed() ? Command::delete_curve : Command::compare_protocols);
  auto* used = attr->parsed() ? attr : (curve->parsed() ? curve : cmp);
  o.config = config;
  if (used->count("--cache")) o.cache = cache;
  if (used->count("--out")) o.out = outdir;
  if (used->count("--seed-override")) o.seed_override = seed;
  if (used == curve && curve->count("--k-max")) o.k_max = k_max;

  try {
    execute(o, out);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "masattr: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const EvaluationError& e) {
    err << "masattr: evaluation error: " << e.what() << "\n";
    return kExitEvaluation;
  } catch (const llm::LlmError& e) {
    err << "masattr: evaluation error: " << e.what() << "\n";
    return kExitEvaluation;
  } catch (const StorageError& e) {
    err << "masattr: storage error: " << e.what() << "\n";
    return kExitEvaluation;
  } catch (const std::invalid_argument& e) {
    err << "masattr: config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace masattr::cli
