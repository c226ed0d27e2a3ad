#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "masattr/cache_store.hpp"
#include "masattr/coalition_game.hpp"
#include "masattr/kernels.hpp"
#include "masattr/llm.hpp"

namespace masattr {

struct CurvePoint {
  std::size_t k = 0;  // bottom-ranked agents removed
  double utility = 0.0;
  std::int64_t billable_tokens = 0;
};

struct DeletionCurve {
  std::vector<AgentIndex> order;  // ascending attribution, ties by index
  std::vector<CurvePoint> points;
  double auc = 0.0;
};

// Trapezoid area over k / k_max in [0, 1]; a single point yields its utility.
double trapezoid_auc(std::span<const double> utilities);

// Ranks agents once by ascending score and, for k = 0..k_max, removes the k
// lowest-ranked agents under the game's protocol.
DeletionCurve deletion_curve(const CoalitionGame& game, const AttributionResult& scores, std::size_t k_max);

// -(log n)^-1 sum p_i log p_i with p_i = |phi_i| / sum |phi_j|.
double normalized_entropy(std::span<const double> scores);
inline double normalized_entropy(const AttributionResult& r) { return normalized_entropy(r.scores); }

struct AgreementReport {
  std::optional<double> r_squared;    // left unset by callers that catch the undefined case
  std::optional<double> spearman_rho; // unset when either ranking is constant
  std::size_t paired = 0;
};

// Coefficient of determination with `reference` as ground truth and
// `candidate` as predictions. Throws when the reference has zero variance.
double r_squared(std::span<const double> candidate, std::span<const double> reference);

// Spearman correlation with average ranks for ties; nullopt if undefined.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

std::vector<double> average_ranks(std::span<const double> values);

// Throws std::invalid_argument on mismatched or too-short inputs and when
// R^2 is undefined.
AgreementReport agreement(std::span<const double> introspective_values, std::span<const double> ablation_values);

struct CostSummary {
  std::int64_t tokens = 0;
  double cost = 0.0;
};

// Sums prompt + completion tokens; records with a model are priced through
// the table, unpriced (synthetic) records cost nothing.
CostSummary cost_summary(std::span<const CacheEntry> ledger, const llm::PricingTable& pricing);

}  // namespace masattr
