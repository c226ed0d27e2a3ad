#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace masattr {

using AgentIndex = std::size_t;

inline constexpr std::size_t kMaxAgents = 64;

// A subset of agent slots. Bit i set means agent i keeps its original
// implementation. The width is carried alongside so that complements and
// validity checks are well defined.
class Coalition {
 public:
  Coalition() = default;
  Coalition(std::size_t width, std::uint64_t mask) : width_(width), mask_(mask) {
    if (width > kMaxAgents) throw std::invalid_argument("coalition width exceeds 64 agents");
    if ((mask & ~full_mask(width)) != 0)
      throw std::invalid_argument("coalition mask has bits outside the agent range");
  }

  static Coalition empty(std::size_t width) { return {width, 0}; }
  static Coalition grand(std::size_t width) { return {width, full_mask(width)}; }
  static Coalition of(std::size_t width, std::initializer_list<AgentIndex> members) {
    std::uint64_t m = 0;
    for (auto i : members) {
      if (i >= width) throw std::out_of_range("agent index " + std::to_string(i) + " out of range");
      m |= std::uint64_t{1} << i;
    }
    return {width, m};
  }

  static constexpr std::uint64_t full_mask(std::size_t width) {
    return width >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1;
  }

  std::size_t width() const { return width_; }
  std::uint64_t mask() const { return mask_; }
  std::size_t size() const { return static_cast<std::size_t>(std::popcount(mask_)); }
  bool is_empty() const { return mask_ == 0; }
  bool is_grand() const { return mask_ == full_mask(width_); }

  bool contains(AgentIndex i) const { return i < width_ && ((mask_ >> i) & 1U) != 0; }

  Coalition with(AgentIndex i) const {
    check(i);
    return {width_, mask_ | (std::uint64_t{1} << i)};
  }
  Coalition without(AgentIndex i) const {
    check(i);
    return {width_, mask_ & ~(std::uint64_t{1} << i)};
  }
  Coalition complement() const { return {width_, ~mask_ & full_mask(width_)}; }

  std::vector<AgentIndex> members() const {
    std::vector<AgentIndex> out;
    out.reserve(size());
    for (std::uint64_t m = mask_; m != 0; m &= m - 1)
      out.push_back(static_cast<AgentIndex>(std::countr_zero(m)));
    return out;
  }

  friend bool operator==(const Coalition&, const Coalition&) = default;

 private:
  void check(AgentIndex i) const {
    if (i >= width_) throw std::out_of_range("agent index " + std::to_string(i) + " out of range");
  }

  std::size_t width_ = 0;
  std::uint64_t mask_ = 0;
};

// |S|! (n-|S|-1)! / n!  ==  1 / (n * C(n-1, |S|))
inline double shapley_weight(std::size_t coalition_size, std::size_t n) {
  double c = 1.0;
  const std::size_t s = coalition_size;
  for (std::size_t k = 1; k <= s; ++k) c = c * static_cast<double>(n - 1 - s + k) / static_cast<double>(k);
  return 1.0 / (static_cast<double>(n) * c);
}

}  // namespace masattr
