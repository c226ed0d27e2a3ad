#include "masattr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace masattr {

double trapezoid_auc(std::span<const double> utilities) {
  if (utilities.empty()) throw std::invalid_argument("curve has no points");
  if (utilities.size() == 1) return utilities[0];
  const double dx = 1.0 / static_cast<double>(utilities.size() - 1);
  double area = 0.0;
  for (std::size_t k = 1; k < utilities.size(); ++k) area += 0.5 * (utilities[k - 1] + utilities[k]) * dx;
  return area;
}

DeletionCurve deletion_curve(const CoalitionGame& game, const AttributionResult& scores, std::size_t k_max) {
  const std::size_t n = game.size();
  if (scores.scores.size() != n) throw std::invalid_argument("attribution does not match the game's agents");
  if (k_max > n)
    throw std::invalid_argument("k_max " + std::to_string(k_max) + " exceeds agent count " + std::to_string(n));

  DeletionCurve curve;
  curve.order = rank_ascending(scores.scores);
  Coalition remaining = Coalition::grand(n);
  std::vector<double> utilities;
  for (std::size_t k = 0; k <= k_max; ++k) {
    if (k > 0) remaining = remaining.without(curve.order[k - 1]);
    const auto rec = game.evaluate(remaining);
    curve.points.push_back({k, rec.value, rec.billable_tokens});
    utilities.push_back(rec.value);
  }
  curve.auc = trapezoid_auc(utilities);
  return curve;
}

double normalized_entropy(std::span<const double> scores) {
  const std::size_t n = scores.size();
  if (n < 2) throw std::invalid_argument("normalized entropy needs at least two agents");
  double total = 0.0;
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("attribution scores must be finite");
    total += std::abs(s);
  }
  if (total == 0.0) throw std::invalid_argument("all attribution scores are zero; entropy is undefined");
  double h = 0.0;
  for (double s : scores) {
    const double p = std::abs(s) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::clamp(h / std::log(static_cast<double>(n)), 0.0, 1.0);
}

double r_squared(std::span<const double> candidate, std::span<const double> reference) {
  if (candidate.size() != reference.size()) throw std::invalid_argument("R^2 inputs differ in length");
  if (reference.size() < 2) throw std::invalid_argument("R^2 needs at least two pairs");
  const double mean = std::accumulate(reference.begin(), reference.end(), 0.0) / static_cast<double>(reference.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t k = 0; k < reference.size(); ++k) {
    ss_tot += (reference[k] - mean) * (reference[k] - mean);
    ss_res += (reference[k] - candidate[k]) * (reference[k] - candidate[k]);
  }
  if (ss_tot == 0.0) throw std::invalid_argument("reference values have zero variance; R^2 is undefined");
  return 1.0 - ss_res / ss_tot;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman inputs differ in length");
  if (a.size() < 2) throw std::invalid_argument("spearman needs at least two pairs");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

AgreementReport agreement(std::span<const double> introspective_values, std::span<const double> ablation_values) {
  if (introspective_values.size() != ablation_values.size())
    throw std::invalid_argument("agreement inputs must be paired by coalition (lengths differ)");
  if (ablation_values.size() < 2) throw std::invalid_argument("agreement needs at least two paired coalitions");
  AgreementReport r;
  r.paired = ablation_values.size();
  r.r_squared = r_squared(introspective_values, ablation_values);
  r.spearman_rho = spearman(introspective_values, ablation_values);
  return r;
}

CostSummary cost_summary(std::span<const CacheEntry> ledger, const llm::PricingTable& pricing) {
  CostSummary s;
  for (const auto& e : ledger) {
    s.tokens += e.tokens();
    if (!e.outcome.model.empty())
      s.cost += llm::price(e.outcome.prompt_tokens, e.outcome.completion_tokens, e.outcome.model, pricing);
  }
  return s;
}

}  // namespace masattr
