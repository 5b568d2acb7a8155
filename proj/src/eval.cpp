#include "fastpfrec/eval.hpp"

#include <algorithm>
#include <cmath>

#include "fastpfrec/errors.hpp"

namespace fastpfrec {

double user_hit(std::span<const ItemId> ranked, std::span<const ItemId> relevant) {
  for (ItemId i : ranked) {
    if (std::binary_search(relevant.begin(), relevant.end(), i)) return 1.0;
  }
  return 0.0;
}

double user_ndcg(std::span<const ItemId> ranked, std::span<const ItemId> relevant,
                 std::size_t k) {
  double dcg = 0.0;
  for (std::size_t p = 0; p < ranked.size(); ++p) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[p])) {
      dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
  }
  const std::size_t ideal_hits = std::min(k, relevant.size());
  double idcg = 0.0;
  for (std::size_t p = 0; p < ideal_hits; ++p) {
    idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  return idcg == 0.0 ? 0.0 : dcg / idcg;
}

RankingMetrics evaluate_users(std::span<const UserEvalCase> cases, std::size_t k,
                              bool parallel) {
  const std::size_t n = cases.size();
  std::vector<double> hits(n, -1.0);  // -1 marks a skipped user
  std::vector<double> ndcgs(n, 0.0);

#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(n); ++idx) {
    const auto& c = cases[static_cast<std::size_t>(idx)];
    if (c.relevant.empty()) continue;
    const auto ranked = rank_items(c.user_emb, *c.item_emb, c.exclude, k);
    hits[idx] = user_hit(ranked, c.relevant);
    ndcgs[idx] = user_ndcg(ranked, c.relevant, k);
  }

  RankingMetrics metrics;
  metrics.k = k;
  double hr_sum = 0.0, ndcg_sum = 0.0;
  for (std::size_t idx = 0; idx < n; ++idx) {
    if (hits[idx] < 0.0) continue;
    hr_sum += hits[idx];
    ndcg_sum += ndcgs[idx];
    ++metrics.users_evaluated;
  }
  if (metrics.users_evaluated == 0) {
    throw EmptyEvaluationError("no evaluable users (all test sets empty)");
  }
  metrics.hr_at_k = hr_sum / static_cast<double>(metrics.users_evaluated);
  metrics.ndcg_at_k = ndcg_sum / static_cast<double>(metrics.users_evaluated);
  return metrics;
}

}  // namespace fastpfrec
