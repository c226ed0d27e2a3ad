#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace masattr {

struct CacheKey {
  std::string game_digest;
  std::uint64_t coalition = 0;
  std::string protocol_digest;
  std::string task;
  std::int64_t seed = 0;
  std::string metric;

  // Flat string used as the index key.
  std::string id() const;
  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

// What one evaluation produced, before it is stamped and stored.
struct EvaluationOutcome {
  double score = 0.0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t billable_tokens = 0;
  std::string model;
  double cost = 0.0;
};

struct CacheEntry {
  CacheKey key;
  EvaluationOutcome outcome;
  // UTC milliseconds since the epoch.
  std::int64_t timestamp_ms = 0;

  std::int64_t tokens() const { return outcome.prompt_tokens + outcome.completion_tokens; }
};

// Memoizes coalition evaluations per (game, coalition, protocol, task, seed,
// metric). With a path, entries go to an append-only log that is replayed on
// open; without one the store lives in memory only.
//
// On-disk layout (little endian; the record payload is described in README.md):
//   header  : "MACL" magic, 1 version byte
//   record  : u32 payload length, u32 crc32(payload), payload
// A torn or corrupt tail is truncated on open.
class CacheStore {
 public:
  static constexpr std::uint8_t kFormatVersion = 1;

  CacheStore();
  explicit CacheStore(const std::filesystem::path& path);
  ~CacheStore();

  CacheStore(const CacheStore&) = delete;
  CacheStore& operator=(const CacheStore&) = delete;

  // Returns the stored entry, or runs `evaluate` exactly once per key even
  // when several threads ask concurrently. Failed evaluations are not stored.
  CacheEntry get_or_evaluate(const CacheKey& key, const std::function<EvaluationOutcome()>& evaluate);

  std::optional<CacheEntry> find(const CacheKey& key) const;

  // All entries in insertion order.
  std::vector<CacheEntry> export_ledger() const;

  std::size_t size() const;
  bool persistent() const { return fd_ >= 0; }
  const std::filesystem::path& path() const { return path_; }

 private:
  void replay();
  void append(const CacheEntry& entry);

  std::filesystem::path path_;
  int fd_ = -1;

  mutable std::mutex mu_;
  std::vector<CacheEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::shared_future<CacheEntry>> in_flight_;
};

}  // namespace masattr
