#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "masattr/game.hpp"
#include "masattr/kernels.hpp"
#include "masattr/llm.hpp"
#include "masattr/protocols.hpp"
#include "masattr/synth.hpp"

namespace masattr::cli {

struct JudgeConfig {
  std::string kind = "constant";  // constant | endpoint
  int success = 1;                // constant
  llm::ModelEndpoint endpoint;    // endpoint
  int max_attempts = 3;
};

struct ProtocolConfig {
  std::string kind;  // ablation | replacement | introspective
  std::optional<std::string> substitute;
  std::map<AgentIndex, std::string> substitutes;
  std::optional<JudgeConfig> judge;
};

struct GameConfig {
  std::vector<std::string> agents;
  Topology topology = Topology::decentralized(1);
  std::optional<synth::SyntheticGameSpec> synthetic;
  std::map<std::string, TaskTranscript> transcripts;
  std::optional<Partition> groups;
  std::optional<std::vector<Edge>> graph;
  double empty_value = 0.0;

  std::size_t size() const { return agents.size(); }
};

struct CompareConfig {
  ProtocolConfig protocol;
  std::optional<KernelSpec> kernel;
};

// One attribution query, with every default filled in.
struct QueryConfig {
  GameConfig game;
  ProtocolConfig protocol;
  std::optional<CompareConfig> compare_with;
  KernelSpec kernel;
  BehaviorMetric metric = BehaviorMetric::task_score;
  std::vector<std::string> tasks;
  std::vector<std::int64_t> seeds{0, 1, 2};
  SeedMode seed_mode = SeedMode::shared;
  ExecutabilityPolicy executability;
  std::optional<std::string> cache;
  std::optional<std::string> output;
  std::map<std::string, llm::Price> pricing;

  EvaluationSpec evaluation_spec() const;
};

// Throws ConfigError naming the offending field, e.g. "kernel.graph: ...".
// Relative file references resolve against `base_dir`.
QueryConfig parse_query(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
QueryConfig load_query(const std::filesystem::path& path);

// Canonical form: every effective default, no cache or output location.
nlohmann::json to_json(const QueryConfig& q);

// Short content hash of to_json(q), used to name the output directory.
std::string query_digest(const QueryConfig& q);

}  // namespace masattr::cli
