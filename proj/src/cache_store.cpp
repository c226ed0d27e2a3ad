#include "masattr/cache_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>
#include <zlib.h>

#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>

#include "masattr/errors.hpp"

namespace masattr {

namespace {

constexpr char kMagic[4] = {'M', 'A', 'C', 'L'};
constexpr std::size_t kHeaderSize = 5;
constexpr std::uint32_t kMaxPayload = 1U << 24;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : p_(data), end_(data + size) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(p_[i])} << (8 * i);
    p_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(p_[i])} << (8 * i);
    p_ += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto len = u32();
    need(len);
    std::string s(p_, len);
    p_ += len;
    return s;
  }
  bool done() const { return p_ == end_; }

 private:
  void need(std::size_t k) const {
    if (static_cast<std::size_t>(end_ - p_) < k) throw StorageError("truncated cache record");
  }
  const char* p_;
  const char* end_;
};

std::string encode(const CacheEntry& e) {
  Writer w;
  w.str(e.key.game_digest);
  w.u64(e.key.coalition);
  w.str(e.key.protocol_digest);
  w.str(e.key.task);
  w.i64(e.key.seed);
  w.str(e.key.metric);
  w.f64(e.outcome.score);
  w.i64(e.outcome.prompt_tokens);
  w.i64(e.outcome.completion_tokens);
  w.i64(e.outcome.billable_tokens);
  w.str(e.outcome.model);
  w.f64(e.outcome.cost);
  w.i64(e.timestamp_ms);
  return std::move(w.bytes());
}

CacheEntry decode(const char* data, std::size_t size) {
  Reader r(data, size);
  CacheEntry e;
  e.key.game_digest = r.str();
  e.key.coalition = r.u64();
  e.key.protocol_digest = r.str();
  e.key.task = r.str();
  e.key.seed = r.i64();
  e.key.metric = r.str();
  e.outcome.score = r.f64();
  e.outcome.prompt_tokens = r.i64();
  e.outcome.completion_tokens = r.i64();
  e.outcome.billable_tokens = r.i64();
  e.outcome.model = r.str();
  e.outcome.cost = r.f64();
  e.timestamp_ms = r.i64();
  if (!r.done()) throw StorageError("trailing bytes in cache record");
  return e;
}

std::uint32_t checksum(const std::string& payload) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
}

void write_all(int fd, const std::string& bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = ::write(fd, bytes.data() + off, bytes.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StorageError(std::string("cache write failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string sys_error(const std::string& what, const std::filesystem::path& p) {
  return what + " '" + p.string() + "': " + std::strerror(errno);
}

}  // namespace

std::string CacheKey::id() const {
  std::string out;
  out.reserve(game_digest.size() + protocol_digest.size() + task.size() + metric.size() + 48);
  out += game_digest;
  out += '|';
  out += std::to_string(coalition);
  out += '|';
  out += protocol_digest;
  out += '|';
  out += std::to_string(task.size());
  out += ':';
  out += task;
  out += '|';
  out += std::to_string(seed);
  out += '|';
  out += metric;
  return out;
}

CacheStore::CacheStore() = default;

CacheStore::CacheStore(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw StorageError(sys_error("cannot open cache", path));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw StorageError("cache '" + path.string() + "' is locked by another process");
  }
  try {
    replay();
  } catch (...) {
    ::close(fd_);
    fd_ = -1;
    throw;
  }
}

CacheStore::~CacheStore() {
  if (fd_ >= 0) ::close(fd_);  // releases the flock
}

void CacheStore::replay() {
  std::string data;
  {
    if (::lseek(fd_, 0, SEEK_SET) < 0) throw StorageError(sys_error("cannot seek cache", path_));
    char buf[1 << 16];
    for (;;) {
      const auto n = ::read(fd_, buf, sizeof buf);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw StorageError(sys_error("cannot read cache", path_));
      }
      if (n == 0) break;
      data.append(buf, static_cast<std::size_t>(n));
    }
  }

  if (data.empty()) {
    std::string header(kMagic, sizeof kMagic);
    header.push_back(static_cast<char>(kFormatVersion));
    write_all(fd_, header);
    return;
  }
  if (data.size() < kHeaderSize || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0)
    throw StorageError("'" + path_.string() + "' is not a coalition cache file");
  if (static_cast<std::uint8_t>(data[4]) != kFormatVersion)
    throw StorageError("cache '" + path_.string() + "' has unsupported format version " +
                       std::to_string(static_cast<int>(static_cast<std::uint8_t>(data[4]))));

  std::size_t off = kHeaderSize;
  std::size_t valid_end = off;
  while (off + 8 <= data.size()) {
    Reader head(data.data() + off, 8);
    const auto len = head.u32();
    const auto crc = head.u32();
    if (len > kMaxPayload || off + 8 + len > data.size()) break;
    std::string payload = data.substr(off + 8, len);
    if (checksum(payload) != crc) break;
    CacheEntry e;
    try {
      e = decode(payload.data(), payload.size());
    } catch (const StorageError&) {
      break;
    }
    off += 8 + len;
    valid_end = off;
    const auto id = e.key.id();
    if (index_.contains(id)) continue;
    index_.emplace(id, entries_.size());
    entries_.push_back(std::move(e));
  }

  if (valid_end != data.size()) {
    if (::ftruncate(fd_, static_cast<off_t>(valid_end)) != 0)
      throw StorageError(sys_error("cannot truncate torn cache tail", path_));
  }
  if (::lseek(fd_, 0, SEEK_END) < 0) throw StorageError(sys_error("cannot seek cache", path_));
}

void CacheStore::append(const CacheEntry& entry) {
  if (fd_ < 0) return;
  const std::string payload = encode(entry);
  Writer head;
  head.u32(static_cast<std::uint32_t>(payload.size()));
  head.u32(checksum(payload));
  std::string record = std::move(head.bytes());
  record += payload;
  write_all(fd_, record);
}

CacheEntry CacheStore::get_or_evaluate(const CacheKey& key,
                                       const std::function<EvaluationOutcome()>& evaluate) {
  const auto id = key.id();
  std::promise<CacheEntry> promise;
  {
    std::unique_lock lock(mu_);
    if (auto it = index_.find(id); it != index_.end()) return entries_[it->second];
    if (auto it = in_flight_.find(id); it != in_flight_.end()) {
      auto fut = it->second;
      lock.unlock();
      return fut.get();
    }
    in_flight_.emplace(id, promise.get_future().share());
  }

  try {
    CacheEntry entry{key, evaluate(), 0};
    if (!std::isfinite(entry.outcome.score)) throw EvaluationError("evaluator returned a non-finite score");
    if (entry.outcome.prompt_tokens < 0 || entry.outcome.completion_tokens < 0 ||
        entry.outcome.billable_tokens < 0)
      throw EvaluationError("evaluator returned negative token counts");
    entry.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
    {
      std::lock_guard lock(mu_);
      append(entry);
      index_.emplace(id, entries_.size());
      entries_.push_back(entry);
      in_flight_.erase(id);
    }
    promise.set_value(entry);
    return entry;
  } catch (...) {
    {
      std::lock_guard lock(mu_);
      in_flight_.erase(id);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

std::optional<CacheEntry> CacheStore::find(const CacheKey& key) const {
  std::lock_guard lock(mu_);
  if (auto it = index_.find(key.id()); it != index_.end()) return entries_[it->second];
  return std::nullopt;
}

std::vector<CacheEntry> CacheStore::export_ledger() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t CacheStore::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

}  // namespace masattr
