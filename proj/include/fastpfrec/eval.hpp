#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fastpfrec/fastgnn.hpp"

namespace fastpfrec {

struct RankingMetrics {
  double hr_at_k = 0.0;
  double ndcg_at_k = 0.0;
  std::size_t k = 0;
  std::size_t users_evaluated = 0;
};

// 1 iff any relevant item appears in the ranked list. `relevant` sorted ascending.
double user_hit(std::span<const ItemId> ranked, std::span<const ItemId> relevant);

// Binary-relevance NDCG with log2 discount: DCG over hit positions divided by
// the ideal DCG for min(k, |relevant|) hits.
double user_ndcg(std::span<const ItemId> ranked, std::span<const ItemId> relevant,
                 std::size_t k);

// Inputs for one user's evaluation; users with empty `relevant` are skipped.
struct UserEvalCase {
  std::span<const double> user_emb;
  const Matrix* item_emb = nullptr;
  std::span<const ItemId> exclude;   // sorted; train + perturbed items
  std::span<const ItemId> relevant;  // sorted; test items
};

// Full-catalog ranking per user, macro-averaged. Per-user values are stored
// and reduced serially in user order so parallel and serial runs agree bitwise.
RankingMetrics evaluate_users(std::span<const UserEvalCase> cases, std::size_t k,
                              bool parallel = false);

}  // namespace fastpfrec
