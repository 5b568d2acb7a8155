#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fastpfrec/adversary.hpp"
#include "fastpfrec/eval.hpp"

using namespace fastpfrec;

TEST_CASE("user_hit detects a relevant item anywhere in the list") {
  const std::vector<ItemId> relevant{4};
  CHECK(user_hit(std::vector<ItemId>{4, 1, 2}, relevant) == 1.0);
  CHECK(user_hit(std::vector<ItemId>{1, 2, 3}, relevant) == 0.0);
}

TEST_CASE("user_ndcg closed forms") {
  const std::vector<ItemId> relevant{9};
  // single relevant item at rank 1
  CHECK(user_ndcg(std::vector<ItemId>{9, 1, 2}, relevant, 10) == doctest::Approx(1.0));
  // single relevant item at 0-based position 2: 1/log2(4) = 0.5
  CHECK(user_ndcg(std::vector<ItemId>{1, 2, 9}, relevant, 10) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // two relevant items at the top two ranks of k=10: DCG == IDCG
  const std::vector<ItemId> two{5, 6};
  CHECK(user_ndcg(std::vector<ItemId>{5, 6, 1, 2, 3, 4, 7, 8, 9, 10}, two, 10) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("metrics ignore everything below rank K") {
  const std::vector<ItemId> relevant{2, 30};
  const std::vector<ItemId> ranked_a{2, 5, 7, 9};
  const std::vector<ItemId> ranked_b{2, 5, 9, 7};  // permuted below the hit
  CHECK(user_ndcg(ranked_a, relevant, 4) == user_ndcg(ranked_b, relevant, 4));
  CHECK(user_hit(ranked_a, relevant) == user_hit(ranked_b, relevant));
}

TEST_CASE("evaluate_users macro-averages and skips empty test sets") {
  // 3 users: hits {1, 0, 1} -> hr 2/3; one extra user with no test edges skipped
  Matrix items(4, 1);
  items(0, 0) = 1.0;
  items(1, 0) = 0.8;
  items(2, 0) = 0.6;
  items(3, 0) = 0.4;
  const std::vector<double> user{1.0};

  const std::vector<ItemId> rel_hit{0};
  const std::vector<ItemId> rel_miss{3};
  const std::vector<ItemId> rel_hit2{1};
  const std::vector<ItemId> rel_empty{};

  std::vector<UserEvalCase> cases(4);
  for (auto& c : cases) {
    c.user_emb = user;
    c.item_emb = &items;
  }
  cases[0].relevant = rel_hit;
  cases[1].relevant = rel_miss;
  cases[2].relevant = rel_hit2;
  cases[3].relevant = rel_empty;

  const auto metrics = evaluate_users(cases, 2);
  CHECK(metrics.users_evaluated == 3);
  CHECK(metrics.hr_at_k == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  // per-user ndcg: 1, 0, 1/log2(3); macro mean must match exactly
  const double expected = (1.0 + 0.0 + 1.0 / std::log2(3.0)) / 3.0;
  CHECK(std::abs(metrics.ndcg_at_k - expected) < 1e-12);
}

TEST_CASE("evaluate_users with no evaluable users throws") {
  Matrix items(2, 1);
  const std::vector<double> user{1.0};
  std::vector<UserEvalCase> cases(1);
  cases[0].user_emb = user;
  cases[0].item_emb = &items;
  CHECK_THROWS_AS(evaluate_users(cases, 1), EmptyEvaluationError);
}

TEST_CASE("parallel evaluation equals serial bitwise") {
  Rng rng(88);
  Matrix items(200, 8);
  for (double& v : items.flat()) v = rng.normal();
  Matrix users(64, 8);
  for (double& v : users.flat()) v = rng.normal();

  std::vector<std::vector<ItemId>> relevant(64);
  for (std::size_t u = 0; u < 64; ++u) {
    relevant[u] = {static_cast<ItemId>(rng.next_below(200)),
                   static_cast<ItemId>(rng.next_below(200))};
    std::sort(relevant[u].begin(), relevant[u].end());
    relevant[u].erase(std::unique(relevant[u].begin(), relevant[u].end()),
                      relevant[u].end());
  }

  std::vector<UserEvalCase> cases(64);
  for (std::size_t u = 0; u < 64; ++u) {
    cases[u].user_emb = users.row(u);
    cases[u].item_emb = &items;
    cases[u].relevant = relevant[u];
  }

  const auto serial = evaluate_users(cases, 10, /*parallel=*/false);
  const auto parallel = evaluate_users(cases, 10, /*parallel=*/true);
  CHECK(serial.hr_at_k == parallel.hr_at_k);
  CHECK(serial.ndcg_at_k == parallel.ndcg_at_k);
  CHECK(serial.users_evaluated == parallel.users_evaluated);
}

TEST_CASE("planted-factor oracle scores far above the random baseline") {
  // Score with the true planted factors: HR@10 must clear 10/M by a wide
  // margin, while random embeddings sit near the baseline.
  const SyntheticSpec spec{200, 300, 8, 20, 4242};
  const auto graph = make_synthetic_dataset(spec);
  const auto split = split_dataset(graph, {0.7, 0.1, 0.2}, 99);

  // reconstruct the planted factors the generator used
  Rng rng(derive_seed(spec.seed, stream::kSynthetic));
  Matrix user_factors(spec.num_users, spec.latent_rank);
  Matrix item_factors(spec.num_items, spec.latent_rank);
  for (double& v : user_factors.flat()) v = rng.normal();
  for (double& v : item_factors.flat()) v = rng.normal();

  std::vector<std::vector<ItemId>> test_items(spec.num_users);
  for (const auto& [u, i] : split.test) test_items[u].push_back(i);
  std::vector<std::vector<ItemId>> train_items(spec.num_users);
  for (UserId u = 0; u < spec.num_users; ++u) {
    const auto nbrs = split.train.neighbors(u);
    train_items[u].assign(nbrs.begin(), nbrs.end());
  }

  std::vector<UserEvalCase> cases;
  for (UserId u = 0; u < spec.num_users; ++u) {
    UserEvalCase c;
    c.user_emb = user_factors.row(u);
    c.item_emb = &item_factors;
    c.exclude = train_items[u];
    c.relevant = test_items[u];
    cases.push_back(c);
  }
  const auto oracle = evaluate_users(cases, 10);

  const double random_baseline = 10.0 / 300.0;
  CHECK(oracle.hr_at_k > 5.0 * random_baseline);

  // untrained random embeddings stay near the baseline
  const auto noise = init_embeddings(spec.num_users, spec.num_items, 8, 31);
  for (UserId u = 0; u < spec.num_users; ++u) {
    cases[u].user_emb = noise.user_emb.row(u);
    cases[u].item_emb = &noise.item_emb;
  }
  const auto random_metrics = evaluate_users(cases, 10);
  // average test-set size per user is ~4, so per-user hit probability is
  // roughly 1-(1-10/280)^4; allow a generous band around it
  CHECK(random_metrics.hr_at_k < 0.4);
  CHECK(random_metrics.hr_at_k < oracle.hr_at_k / 3.0);
}
