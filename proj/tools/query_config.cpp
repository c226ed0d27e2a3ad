#include "query_config.hpp"

#include <fstream>
#include <set>

#include "masattr/digest.hpp"
#include "masattr/errors.hpp"

namespace masattr::cli {

using nlohmann::json;

namespace {

std::string type_name(const json& j) { return j.type_name(); }

// Strict view of one config object: every key must be read, and every read
// error names the dotted path of the field.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object, got " + type_name(j_));
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(at(key) + ": missing required field");
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    const json& v = raw(key);
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(at(key) + ": wrong type (" + type_name(v) + ")");
    }
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    return get<T>(key);
  }

  Node child(const std::string& key) { return Node(raw(key), at(key)); }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& why) const { throw ConfigError(path_ + ": " + why); }

  // Rejects keys nobody asked for.
  void done() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.contains(k)) throw ConfigError(at(k) + ": unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs `fn`, turning library validation errors into config errors on `field`.
template <class F>
auto on_field(const std::string& field, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field + ": " + e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

std::vector<Edge> parse_edges(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected a list of [from, to] pairs");
  std::vector<Edge> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto& e = j[k];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned())
      throw ConfigError(path + "[" + std::to_string(k) + "]: expected [from, to] agent indices");
    out.push_back({e[0].get<AgentIndex>(), e[1].get<AgentIndex>()});
  }
  return out;
}

json edges_json(const std::vector<Edge>& edges) {
  json out = json::array();
  for (const auto& e : edges) out.push_back({e.from, e.to});
  return out;
}

Partition parse_groups(const json& j, const std::string& path, const Topology& topo) {
  if (j.is_string()) {
    if (j.get<std::string>() != "orchestrator_workers")
      throw ConfigError(path + ": expected a partition or \"orchestrator_workers\"");
    const auto hub = topo.hub();
    if (!hub) throw ConfigError(path + ": \"orchestrator_workers\" needs a topology with a hub role");
    Partition p{{*hub}, {}};
    for (AgentIndex i = 0; i < topo.agent_count(); ++i)
      if (i != *hub) p[1].push_back(i);
    if (p[1].empty()) p.pop_back();
    return p;
  }
  try {
    return j.get<Partition>();
  } catch (const json::exception&) {
    throw ConfigError(path + ": expected a list of agent-index lists");
  }
}

std::vector<Edge> parse_graph(const json& j, const std::string& path, const Topology& topo) {
  if (j.is_string()) {
    if (j.get<std::string>() != "topology") throw ConfigError(path + ": expected an edge list or \"topology\"");
    return topo.edges();
  }
  return parse_edges(j, path);
}

Topology parse_topology(Node node, std::size_t n) {
  const auto kind = on_field(node.at("kind"), [&] { return topology_kind_from_string(node.get<std::string>("kind")); });
  return on_field(node.path(), [&] {
    Topology t = Topology::decentralized(n);
    switch (kind) {
      case TopologyKind::independent:
        t = Topology::independent(n, node.get<AgentIndex>("aggregator", n - 1));
        break;
      case TopologyKind::centralized:
        t = Topology::centralized(n, node.get<AgentIndex>("orchestrator", 0));
        break;
      case TopologyKind::decentralized:
        break;
      case TopologyKind::hybrid: {
        const auto orch = node.get<AgentIndex>("orchestrator", 0);
        auto peers = node.has("peer_edges") ? parse_edges(node.raw("peer_edges"), node.at("peer_edges"))
                                            : Topology::default_peer_edges(n, orch);
        t = Topology::hybrid(n, orch, std::move(peers));
        break;
      }
    }
    node.done();
    return t;
  });
}

synth::SyntheticGameSpec parse_synthetic(Node node) {
  synth::SyntheticGameSpec s;
  s.family = on_field(node.at("family"), [&] { return synth::family_from_string(node.get<std::string>("family")); });
  s.threshold = node.get<std::size_t>("threshold", 1);
  s.bonus = node.get<double>("bonus", 0.0);
  s.sigma = node.get<double>("sigma", 0.0);
  s.noise_seed = node.get<std::uint64_t>("noise_seed", 0);
  const json& prof = node.raw("profile");
  if (!prof.is_array() || prof.empty()) throw ConfigError(node.at("profile") + ": expected a non-empty list");
  for (std::size_t i = 0; i < prof.size(); ++i) {
    Node a(prof[i], node.at("profile") + "[" + std::to_string(i) + "]");
    synth::AgentCapability c;
    c.skill = a.get<double>("skill");
    c.substitute_skill = a.get<double>("substitute_skill", 0.0);
    c.token_cost = a.get<std::int64_t>("token_cost", 0);
    a.done();
    s.profile.per_agent.push_back(c);
  }
  node.done();
  return s;
}

std::map<std::string, TaskTranscript> parse_transcripts(const json& j, const std::string& path,
                                                        const std::filesystem::path& base_dir) {
  if (j.is_string()) {
    std::filesystem::path file = j.get<std::string>();
    if (file.is_relative()) file = base_dir / file;
    std::ifstream in(file);
    if (!in) throw ConfigError(path + ": cannot read transcript file " + file.string());
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError(path + ": " + file.string() + " is not valid JSON");
    return parse_transcripts(doc, path, base_dir);
  }
  if (!j.is_object()) throw ConfigError(path + ": expected an object of task id -> transcripts, or a file path");
  std::map<std::string, TaskTranscript> out;
  for (const auto& [task_id, body] : j.items()) {
    Node t(body, path + "." + task_id);
    TaskTranscript tt;
    tt.task = t.get<std::string>("task");
    tt.per_agent = t.get<std::vector<std::string>>("agents");
    t.done();
    out[task_id] = std::move(tt);
  }
  return out;
}

GameConfig parse_game(Node node, const std::filesystem::path& base_dir) {
  GameConfig g;
  g.agents = node.get<std::vector<std::string>>("agents", {});
  if (node.has("synthetic")) g.synthetic = parse_synthetic(node.child("synthetic"));
  if (node.has("transcripts")) g.transcripts = parse_transcripts(node.raw("transcripts"), node.at("transcripts"), base_dir);
  g.empty_value = node.get<double>("empty_value", 0.0);

  std::size_t n = g.agents.size();
  const auto agree = [&](std::size_t m, const std::string& field) {
    if (n == 0) n = m;
    else if (m != n)
      throw ConfigError(node.at(field) + ": describes " + std::to_string(m) + " agents, expected " +
                        std::to_string(n));
  };
  if (g.synthetic) agree(g.synthetic->profile.per_agent.size(), "synthetic.profile");
  for (const auto& [id, t] : g.transcripts) agree(t.per_agent.size(), "transcripts." + id + ".agents");
  if (n == 0) throw ConfigError(node.at("agents") + ": cannot tell how many agents the game has");
  if (n > kMaxAgents) throw ConfigError(node.at("agents") + ": at most 64 agents are supported");
  if (g.agents.empty())
    for (std::size_t i = 0; i < n; ++i) g.agents.push_back("agent_" + std::to_string(i));
  if (std::set<std::string>(g.agents.begin(), g.agents.end()).size() != n)
    throw ConfigError(node.at("agents") + ": labels must be unique");

  g.topology = parse_topology(node.child("topology"), n);
  if (g.synthetic) {
    g.synthetic->topology = g.topology;
    on_field(node.at("synthetic"), [&] { g.synthetic->validate(); return 0; });
  }
  if (node.has("groups")) {
    g.groups = parse_groups(node.raw("groups"), node.at("groups"), g.topology);
    on_field(node.at("groups"), [&] { validate_partition(*g.groups, n); return 0; });
  } else {
    node.get<json>("groups", json());
  }
  if (node.has("graph")) {
    g.graph = parse_graph(node.raw("graph"), node.at("graph"), g.topology);
    on_field(node.at("graph"), [&] { return undirected_adjacency(n, *g.graph); });
  } else {
    node.get<json>("graph", json());
  }
  node.done();
  return g;
}

AgentIndex agent_ref(const std::string& ref, const GameConfig& g, const std::string& path) {
  for (AgentIndex i = 0; i < g.size(); ++i)
    if (g.agents[i] == ref) return i;
  try {
    std::size_t used = 0;
    const auto v = std::stoul(ref, &used);
    if (used == ref.size() && v < g.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(path + ": '" + ref + "' is neither an agent label nor an index");
}

JudgeConfig parse_judge(Node node) {
  JudgeConfig j;
  j.kind = node.get<std::string>("kind");
  j.max_attempts = node.get<int>("max_attempts", 3);
  if (j.max_attempts < 1) throw ConfigError(node.at("max_attempts") + ": must be at least 1");
  if (j.kind == "constant") {
    j.success = node.get<int>("success", 1);
    if (j.success != 0 && j.success != 1) throw ConfigError(node.at("success") + ": must be 0 or 1");
  } else if (j.kind == "endpoint") {
    auto& e = j.endpoint;
    e.base_url = node.get<std::string>("base_url");
    e.model = node.get<std::string>("model");
    e.api_key_env = node.get<std::string>("api_key_env", e.api_key_env);
    e.timeout_s = node.get<double>("timeout_s", e.timeout_s);
    e.max_retries = node.get<int>("max_retries", e.max_retries);
    e.temperature = node.get<double>("temperature", e.temperature);
    e.max_concurrency = node.get<int>("max_concurrency", e.max_concurrency);
    on_field(node.path(), [&] { e.validate(); return 0; });
  } else {
    throw ConfigError(node.at("kind") + ": unknown judge kind '" + j.kind + "' (expected constant or endpoint)");
  }
  node.done();
  return j;
}

ProtocolConfig parse_protocol(Node node, const GameConfig& g) {
  ProtocolConfig p;
  p.kind = node.get<std::string>("kind");
  if (p.kind == "ablation") {
  } else if (p.kind == "replacement") {
    if (node.has("substitute")) p.substitute = node.get<std::string>("substitute");
    if (node.has("substitutes")) {
      Node subs = node.child("substitutes");
      for (const auto& [ref, _] : node.raw("substitutes").items())
        p.substitutes[agent_ref(ref, g, subs.at(ref))] = subs.get<std::string>(ref);
      subs.done();
    } else {
      node.get<json>("substitutes", json());
    }
    on_field(node.path(), [&] {
      for (AgentIndex i = 0; i < g.size(); ++i)
        if (!p.substitutes.contains(i) && !p.substitute)
          throw std::invalid_argument("no substitute for agent '" + g.agents[i] +
                                      "' and no shared default (substitute)");
      for (const auto& [_, s] : p.substitutes)
        if (s.empty()) throw std::invalid_argument("substitute names must be non-empty");
      if (p.substitute && p.substitute->empty()) throw std::invalid_argument("substitute must be non-empty");
      return 0;
    });
  } else if (p.kind == "introspective") {
    p.judge = parse_judge(node.child("judge"));
  } else {
    throw ConfigError(node.at("kind") + ": unknown protocol '" + p.kind +
                      "' (expected ablation, replacement or introspective)");
  }
  if (p.kind != "introspective" && !g.synthetic)
    throw ConfigError(node.at("kind") + ": " + p.kind +
                      " runs the system, which needs game.synthetic; transcript-only games support "
                      "introspective removal");
  if (p.kind == "introspective" && g.transcripts.empty())
    throw ConfigError("game.transcripts: introspective removal needs grand-coalition transcripts");
  node.done();
  return p;
}

KernelSpec parse_kernel(Node node, const GameConfig& g) {
  KernelSpec k;
  k.kind = on_field(node.at("kind"), [&] { return kernel_kind_from_string(node.get<std::string>("kind")); });
  if (k.kind == KernelKind::shapley_sampled) {
    const auto budget = node.get<std::int64_t>("budget");
    if (budget < 1) throw ConfigError(node.at("budget") + ": shapley_sampled needs budget >= 1");
    k.budget = static_cast<std::size_t>(budget);
    k.seed = node.get<std::uint64_t>("seed", 0);
  } else {
    node.get<json>("budget", json());
    node.get<json>("seed", json());
  }
  k.exact_limit = node.get<std::size_t>("exact_limit", kDefaultExactLimit);

  if (node.has("groups"))
    k.groups = parse_groups(node.raw("groups"), node.at("groups"), g.topology);
  else
    node.get<json>("groups", json());
  if (node.has("graph"))
    k.graph = parse_graph(node.raw("graph"), node.at("graph"), g.topology);
  else
    node.get<json>("graph", json());

  if (k.kind == KernelKind::owen) {
    if (!k.groups) k.groups = g.groups;
    if (!k.groups) throw ConfigError(node.at("groups") + ": owen needs a partition of the agents");
    on_field(node.at("groups"), [&] { validate_partition(*k.groups, g.size()); return 0; });
  } else if (k.groups) {
    throw ConfigError(node.at("groups") + ": only the owen kernel takes groups");
  }
  if (k.kind == KernelKind::myerson) {
    if (!k.graph) k.graph = g.graph;
    if (!k.graph)
      throw ConfigError(node.at("graph") + ": myerson needs an interaction graph (an edge list or \"topology\")");
    on_field(node.at("graph"), [&] { return undirected_adjacency(g.size(), *k.graph); });
  } else if (k.graph) {
    throw ConfigError(node.at("graph") + ": only the myerson kernel takes a graph");
  }
  on_field(node.path(), [&] { k.validate(g.size()); return 0; });
  node.done();
  return k;
}

ExecutabilityPolicy parse_policy(Node node) {
  const auto name = node.get<std::string>("policy", "zero_utility");
  ExecutabilityPolicy p;
  if (name == "zero_utility") {
    node.get<json>("value", json());
  } else if (name == "skip_with_error") {
    p = ExecutabilityPolicy::skip_with_error();
    node.get<json>("value", json());
  } else if (name == "baseline") {
    const double v = node.get<double>("value");
    p = on_field(node.at("value"), [&] { return ExecutabilityPolicy::baseline(v); });
  } else {
    throw ConfigError(node.at("policy") + ": unknown policy '" + name +
                      "' (expected zero_utility, skip_with_error or baseline)");
  }
  node.done();
  return p;
}

json kernel_json(const KernelSpec& k) {
  json j;
  j["kind"] = to_string(k.kind);
  if (k.kind == KernelKind::shapley_sampled) {
    j["budget"] = k.budget;
    j["seed"] = k.seed;
  }
  if (k.groups) j["groups"] = *k.groups;
  if (k.graph) j["graph"] = edges_json(*k.graph);
  j["exact_limit"] = k.exact_limit;
  return j;
}

json protocol_json(const ProtocolConfig& p) {
  json j;
  j["kind"] = p.kind;
  if (p.substitute) j["substitute"] = *p.substitute;
  if (!p.substitutes.empty()) {
    json s = json::object();
    for (const auto& [i, name] : p.substitutes) s[std::to_string(i)] = name;
    j["substitutes"] = s;
  }
  if (p.judge) {
    json jj;
    jj["kind"] = p.judge->kind;
    jj["max_attempts"] = p.judge->max_attempts;
    if (p.judge->kind == "constant") {
      jj["success"] = p.judge->success;
    } else {
      const auto& e = p.judge->endpoint;
      jj["base_url"] = e.base_url;
      jj["model"] = e.model;
      jj["api_key_env"] = e.api_key_env;
      jj["timeout_s"] = e.timeout_s;
      jj["max_retries"] = e.max_retries;
      jj["temperature"] = e.temperature;
      jj["max_concurrency"] = e.max_concurrency;
    }
    j["judge"] = jj;
  }
  return j;
}

}  // namespace

EvaluationSpec QueryConfig::evaluation_spec() const {
  EvaluationSpec s;
  s.tasks = tasks;
  s.seeds = seeds;
  s.metric = metric;
  s.seed_mode = seed_mode;
  return s;
}

QueryConfig parse_query(const json& doc, const std::filesystem::path& base_dir) {
  Node root(doc, "");
  QueryConfig q;
  q.game = parse_game(root.child("game"), base_dir);
  q.protocol = parse_protocol(root.child("protocol"), q.game);
  if (root.has("compare_with")) {
    Node c = root.child("compare_with");
    CompareConfig cc;
    cc.protocol = parse_protocol(c.child("protocol"), q.game);
    if (c.has("kernel")) cc.kernel = parse_kernel(c.child("kernel"), q.game);
    else c.get<json>("kernel", json());
    c.done();
    q.compare_with = cc;
  } else {
    root.get<json>("compare_with", json());
  }
  q.kernel = parse_kernel(root.child("kernel"), q.game);
  q.metric = on_field("metric", [&] { return behavior_metric_from_string(root.get<std::string>("metric", "task_score")); });

  const bool introspective =
      q.protocol.kind == "introspective" || (q.compare_with && q.compare_with->protocol.kind == "introspective");
  if (root.has("tasks")) {
    q.tasks = root.get<std::vector<std::string>>("tasks");
  } else if (introspective) {
    root.get<json>("tasks", json());
    for (const auto& [id, _] : q.game.transcripts) q.tasks.push_back(id);
  } else {
    root.get<json>("tasks", json());
    q.tasks = {"task"};
  }
  if (q.tasks.empty()) throw ConfigError("tasks: at least one task is needed");
  if (std::set<std::string>(q.tasks.begin(), q.tasks.end()).size() != q.tasks.size())
    throw ConfigError("tasks: task ids must be unique");
  if (introspective)
    for (const auto& t : q.tasks)
      if (!q.game.transcripts.contains(t)) throw ConfigError("game.transcripts: no transcripts for task '" + t + "'");

  q.seeds = root.get<std::vector<std::int64_t>>("seeds", q.seeds);
  if (q.seeds.empty()) throw ConfigError("seeds: at least one seed is needed");
  q.seed_mode = on_field("seed_mode", [&] { return seed_mode_from_string(root.get<std::string>("seed_mode", "shared")); });
  if (root.has("executability")) q.executability = parse_policy(root.child("executability"));
  // Relative locations follow the config file, like transcript files do.
  const auto located = [&](const std::string& key) {
    std::filesystem::path path = root.get<std::string>(key);
    return (path.is_relative() ? base_dir / path : path).string();
  };
  if (root.has("cache")) q.cache = located("cache");
  if (root.has("output")) q.output = located("output");

  if (root.has("pricing")) {
    Node p = root.child("pricing");
    for (const auto& [model, _] : root.raw("pricing").items()) {
      Node m = p.child(model);
      llm::Price price{m.get<double>("prompt_per_1k"), m.get<double>("completion_per_1k")};
      m.done();
      q.pricing[model] = price;
    }
    p.done();
    on_field("pricing", [&] { return llm::PricingTable(q.pricing); });
  } else {
    root.get<json>("pricing", json());
  }
  for (const auto* p : {&q.protocol, q.compare_with ? &q.compare_with->protocol : nullptr})
    if (p && p->judge && p->judge->kind == "endpoint" && !q.pricing.contains(p->judge->endpoint.model)) {
      std::string known;
      for (const auto& [m, _] : q.pricing) known += (known.empty() ? "" : ", ") + m;
      throw ConfigError("pricing: no price for judge model '" + p->judge->endpoint.model + "' (known: " +
                        (known.empty() ? "none" : known) + ")");
    }
  root.done();
  return q;
}

QueryConfig load_query(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config: cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_query(doc, path.parent_path());
}

json to_json(const QueryConfig& q) {
  json j;
  const auto& g = q.game;
  j["game"]["agents"] = g.agents;
  json topo;
  topo["kind"] = to_string(g.topology.kind());
  if (auto o = g.topology.orchestrator()) topo["orchestrator"] = *o;
  if (auto a = g.topology.aggregator()) topo["aggregator"] = *a;
  topo["edges"] = edges_json(g.topology.edges());
  j["game"]["topology"] = topo;
  if (g.synthetic) {
    const auto& s = *g.synthetic;
    json sj;
    sj["family"] = synth::to_string(s.family);
    sj["threshold"] = s.threshold;
    sj["bonus"] = s.bonus;
    sj["sigma"] = s.sigma;
    sj["noise_seed"] = s.noise_seed;
    for (const auto& a : s.profile.per_agent)
      sj["profile"].push_back({{"skill", a.skill}, {"substitute_skill", a.substitute_skill}, {"token_cost", a.token_cost}});
    j["game"]["synthetic"] = sj;
  }
  if (!g.transcripts.empty())
    for (const auto& [id, t] : g.transcripts) j["game"]["transcripts"][id] = {{"task", t.task}, {"agents", t.per_agent}};
  if (g.groups) j["game"]["groups"] = *g.groups;
  if (g.graph) j["game"]["graph"] = edges_json(*g.graph);
  j["game"]["empty_value"] = g.empty_value;

  j["protocol"] = protocol_json(q.protocol);
  if (q.compare_with) {
    j["compare_with"]["protocol"] = protocol_json(q.compare_with->protocol);
    if (q.compare_with->kernel) j["compare_with"]["kernel"] = kernel_json(*q.compare_with->kernel);
  }
  j["kernel"] = kernel_json(q.kernel);
  j["metric"] = to_string(q.metric);
  j["tasks"] = q.tasks;
  j["seeds"] = q.seeds;
  j["seed_mode"] = to_string(q.seed_mode);
  j["executability"]["policy"] = [&] {
    switch (q.executability.mode) {
      case ExecutabilityPolicy::Mode::zero_utility: return "zero_utility";
      case ExecutabilityPolicy::Mode::skip_with_error: return "skip_with_error";
      case ExecutabilityPolicy::Mode::baseline: return "baseline";
    }
    return "zero_utility";
  }();
  if (q.executability.mode == ExecutabilityPolicy::Mode::baseline) j["executability"]["value"] = q.executability.value;
  j["pricing"] = json::object();
  for (const auto& [m, p] : q.pricing)
    j["pricing"][m] = {{"prompt_per_1k", p.prompt_per_1k}, {"completion_per_1k", p.completion_per_1k}};
  return j;
}

std::string query_digest(const QueryConfig& q) { return sha256_hex("query:" + to_json(q).dump()).substr(0, 16); }

}  // namespace masattr::cli
