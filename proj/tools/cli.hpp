#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "query_config.hpp"

namespace masattr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitEvaluation = 3;

enum class Command { attribute, delete_curve, compare_protocols };

struct Options {
  Command command = Command::attribute;
  std::filesystem::path config;
  std::optional<std::filesystem::path> cache;
  std::optional<std::filesystem::path> out;
  unsigned jobs = 1;
  std::optional<std::size_t> k_max;
  std::optional<std::int64_t> seed_override;
};

// What a finished run did, besides the files it wrote.
struct RunSummary {
  std::filesystem::path report_dir;
  std::int64_t evaluator_calls = 0;
  std::size_t cache_entries = 0;
};

// Runs one command. Throws ConfigError / EvaluationError / StorageError.
RunSummary execute(const Options& options, std::ostream& log);

// Parses argv, runs, and maps errors to exit codes 0 / 2 / 3.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace masattr::cli
