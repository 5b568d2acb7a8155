#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fastpfrec/fastgnn.hpp"

using namespace fastpfrec;

namespace {

InteractionGraph star_graph(std::uint32_t num_items, std::vector<ItemId> items) {
  std::vector<Edge> edges;
  for (ItemId i : items) edges.emplace_back(0, i);
  return InteractionGraph(1, num_items, std::move(edges));
}

InteractionGraph random_bipartite(std::uint32_t n, std::uint32_t m, std::size_t edges,
                                  std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> list;
  for (std::uint32_t u = 0; u < n; ++u) list.emplace_back(u, u % m);  // no empty rows
  while (list.size() < edges) {
    list.emplace_back(static_cast<UserId>(rng.next_below(n)),
                      static_cast<ItemId>(rng.next_below(m)));
  }
  return InteractionGraph(n, m, std::move(list));
}

EmbeddingState random_state(std::size_t n, std::size_t m, std::size_t k,
                            std::uint64_t seed) {
  return init_embeddings(n, m, k, seed);
}

}  // namespace

TEST_CASE("init_embeddings is deterministic and respects the uniform bound") {
  const auto a = init_embeddings(5, 7, 64, 123);
  const auto b = init_embeddings(5, 7, 64, 123);
  CHECK(a == b);
  const double bound = 0.5 / 8.0;  // k=64
  for (double v : a.item_emb.flat()) {
    CHECK(v >= -bound);
    CHECK(v < bound);
  }
  CHECK(init_embeddings(5, 7, 64, 124).item_emb != a.item_emb);
}

TEST_CASE("init_embeddings rejects k=0") {
  CHECK_THROWS_AS(init_embeddings(2, 2, 0, 1), ConfigError);
}

TEST_CASE("init_embeddings sample mean is near zero") {
  // 10^6 draws: SE = sqrt(1/(12k)) / 1000 at k=4.
  const std::size_t k = 4;
  const auto state = init_embeddings(0, 250000, k, 77);
  const auto flat = state.item_emb.flat();
  const double mean =
      std::accumulate(flat.begin(), flat.end(), 0.0) / static_cast<double>(flat.size());
  const double se = std::sqrt(1.0 / (12.0 * static_cast<double>(k))) /
                    std::sqrt(static_cast<double>(flat.size()));
  CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("propagate: one layer of mean aggregation on a 2-item star") {
  const auto graph = star_graph(2, {0, 1});
  const auto pg = PropagationGraph::from_interactions(graph);

  EmbeddingState state;
  state.user_emb = Matrix(1, 2);
  state.item_emb = Matrix(2, 2);
  state.item_emb(0, 0) = 1.0;
  state.item_emb(1, 1) = 1.0;

  FastGnnConfig cfg;
  cfg.layers = 1;
  cfg.item_update_multiplier = 10;
  cfg.activation = Activation::identity;
  cfg.weighting = NeighborWeighting::mean;

  OpCounter ops;
  const auto out = propagate(pg, state, cfg, /*epoch=*/1, ops);  // not a refresh epoch
  CHECK(out.user_emb(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.user_emb(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.item_emb == state.item_emb);  // pass-through
}

TEST_CASE("propagate leaves items bitwise untouched off the refresh schedule") {
  const auto graph = random_bipartite(6, 9, 30, 5);
  const auto pg = PropagationGraph::from_interactions(graph);
  auto state = random_state(6, 9, 8, 21);

  FastGnnConfig cfg;
  cfg.layers = 2;
  cfg.item_update_multiplier = 10;

  OpCounter ops;
  const auto out = propagate(pg, state, cfg, /*epoch=*/1, ops);  // 1 mod 20 != 0
  CHECK(out.item_emb == state.item_emb);
  CHECK(out.user_emb != state.user_emb);
  CHECK(ops.item_refresh_epochs == 0);
}

TEST_CASE("refresh schedule: H=2, h=10 refreshes exactly 10 times in 200 epochs") {
  const auto graph = random_bipartite(4, 4, 10, 9);
  const auto pg = PropagationGraph::from_interactions(graph);
  auto state = random_state(4, 4, 4, 3);

  FastGnnConfig cfg;
  cfg.layers = 2;
  cfg.item_update_multiplier = 10;

  OpCounter ops;
  PropagationScratch scratch;
  std::vector<std::size_t> refresh_epochs;
  for (std::size_t epoch = 0; epoch < 200; ++epoch) {
    const auto before = ops.item_refresh_epochs;
    propagate_inplace(pg, state, cfg, epoch, ops, scratch);
    if (ops.item_refresh_epochs > before) refresh_epochs.push_back(epoch);
  }
  CHECK(ops.epochs_run == 200);
  CHECK(ops.item_refresh_epochs == 10);
  std::vector<std::size_t> expected{0, 20, 40, 60, 80, 100, 120, 140, 160, 180};
  CHECK(refresh_epochs == expected);
  // On a square graph (N == M) the row-update ratio equals the epoch ratio.
  CHECK(ops.item_update_ops * 20 == ops.user_update_ops);
}

TEST_CASE("schedule ratio bound holds across configurations") {
  const auto graph = random_bipartite(5, 5, 12, 13);
  const auto pg = PropagationGraph::from_interactions(graph);

  for (std::size_t h : {1, 2, 5, 10}) {
    for (std::size_t H : {1, 2, 3}) {
      auto state = random_state(5, 5, 4, 3);
      FastGnnConfig cfg;
      cfg.layers = H;
      cfg.item_update_multiplier = h;
      OpCounter ops;
      PropagationScratch scratch;
      const std::size_t E = 100;
      for (std::size_t epoch = 0; epoch < E; ++epoch) {
        propagate_inplace(pg, state, cfg, epoch, ops, scratch);
      }
      const double ratio = static_cast<double>(ops.item_update_ops) /
                           static_cast<double>(ops.user_update_ops);
      const double bound = (1.0 / static_cast<double>(h)) *
                           (1.0 + 1.0 / static_cast<double>(E)) + 1e-12;
      CHECK(ratio <= bound);
    }
  }
}

TEST_CASE("scheduled path at H=1,h=1 equals the full-update reference bitwise") {
  const auto graph = random_bipartite(8, 11, 40, 31);
  const auto pg = PropagationGraph::from_interactions(graph);

  FastGnnConfig cfg;
  cfg.layers = 1;
  cfg.item_update_multiplier = 1;  // refresh every epoch

  for (auto act : {Activation::identity, Activation::sigmoid}) {
    for (auto w : {NeighborWeighting::symmetric_sqrt, NeighborWeighting::mean}) {
      cfg.activation = act;
      cfg.weighting = w;

      auto scheduled = random_state(8, 11, 6, 77);
      auto reference = scheduled;
      OpCounter ops_a, ops_b;
      PropagationScratch scratch;
      for (std::size_t epoch = 0; epoch < 7; ++epoch) {
        propagate_inplace(pg, scheduled, cfg, epoch, ops_a, scratch);
        propagate_full_update_reference(pg, reference, cfg, ops_b);
      }
      CHECK(scheduled == reference);
      CHECK(ops_a.item_update_ops == ops_b.item_update_ops);
    }
  }
}

TEST_CASE("parallel propagation matches the serial path bitwise") {
  const auto graph = random_bipartite(64, 96, 1200, 41);
  const auto pg = PropagationGraph::from_interactions(graph);
  FastGnnConfig cfg;  // defaults: H=2, h=10, sigmoid, symmetric
  auto serial = random_state(64, 96, 16, 5);
  auto parallel = serial;
  OpCounter ops_a, ops_b;
  PropagationScratch sa, sb;
  for (std::size_t epoch = 0; epoch < 25; ++epoch) {
    propagate_inplace(pg, serial, cfg, epoch, ops_a, sa, /*parallel=*/false);
    propagate_inplace(pg, parallel, cfg, epoch, ops_b, sb, /*parallel=*/true);
  }
  CHECK(serial == parallel);
}

TEST_CASE("propagate rejects mismatched shapes") {
  const auto graph = random_bipartite(3, 4, 6, 2);
  const auto pg = PropagationGraph::from_interactions(graph);
  auto state = random_state(3, 5, 4, 1);  // wrong item count
  OpCounter ops;
  CHECK_THROWS_AS(propagate(pg, state, {}, 0, ops), ShapeError);
}

TEST_CASE("predict_score hand cases") {
  const std::vector<double> a{1.0, 0.0}, b{0.0, 1.0};
  CHECK(predict_score(a, b) == 0.0);
  const std::vector<double> c{1.0, 2.0}, d{3.0, 4.0};
  CHECK(predict_score(c, d) == 11.0);
}

TEST_CASE("predict_score matches an independent summation oracle at k=64") {
  Rng rng(2024);
  std::vector<double> u(64), v(64);
  for (auto& x : u) x = rng.normal();
  for (auto& x : v) x = rng.normal();
  // oracle: index-by-index accumulation in reverse order
  double oracle = 0.0;
  for (std::size_t d = 64; d-- > 0;) oracle += u[d] * v[d];
  CHECK(std::abs(predict_score(u, v) - oracle) < 1e-10);
}

TEST_CASE("predict_score is homogeneous in the user argument") {
  Rng rng(8);
  std::vector<double> u(16), v(16);
  for (auto& x : u) x = rng.normal();
  for (auto& x : v) x = rng.normal();
  const double base = predict_score(u, v);
  for (double c : {2.0, 0.5, -3.0}) {
    auto scaled = u;
    for (auto& x : scaled) x *= c;
    CHECK(std::abs(predict_score(scaled, v) - c * base) < 1e-12 * std::abs(c * base) + 1e-12);
  }
}

TEST_CASE("predict_score rejects mismatched dimensions") {
  const std::vector<double> a{1.0, 2.0}, b{1.0};
  CHECK_THROWS_AS(predict_score(a, b), ShapeError);
}

TEST_CASE("bpr loss equals ln 2 when scores tie") {
  EmbeddingState state;
  state.user_emb = Matrix(1, 2);
  state.item_emb = Matrix(2, 2);
  state.user_emb(0, 0) = 1.0;
  state.item_emb(0, 0) = 0.3;  // same score for both items
  state.item_emb(1, 0) = 0.3;

  TrainConfig cfg;
  cfg.l2_reg = 0.0;
  const std::vector<BprTriple> batch{{0, 0, 1}};
  const double loss = bpr_batch_loss(state, batch, cfg);
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bpr analytic gradients match central finite differences") {
  // ~20 random small instances, both gamma = 0 and gamma > 0.
  const double eps = 1e-5;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (double gamma : {0.0, 0.01}) {
      Rng rng(derive_seed(500, seed, static_cast<std::uint64_t>(gamma * 100)));
      const std::size_t n = 3 + rng.next_below(7);   // <= 10 users
      const std::size_t m = 4 + rng.next_below(6);   // <= 10 items
      const std::size_t k = 2 + rng.next_below(6);   // <= 8 dims
      auto state = init_embeddings(n, m, k, seed + 9000);

      std::vector<BprTriple> batch;
      const std::size_t batch_len = 1 + rng.next_below(6);
      for (std::size_t b = 0; b < batch_len; ++b) {
        const auto u = static_cast<UserId>(rng.next_below(n));
        const auto pos = static_cast<ItemId>(rng.next_below(m));
        auto neg = static_cast<ItemId>(rng.next_below(m));
        if (neg == pos) neg = static_cast<ItemId>((neg + 1) % m);
        batch.push_back({u, pos, neg});
      }

      TrainConfig cfg;
      cfg.learning_rate = 1.0;  // step displacement equals the gradient
      cfg.l2_reg = gamma;

      auto stepped = state;
      bpr_step(stepped, batch, cfg);

      double max_rel = 0.0;
      const auto check_block = [&](Matrix& probe_m, const Matrix& stepped_m,
                                   const Matrix& base_m) {
        for (std::size_t r = 0; r < probe_m.rows(); ++r) {
          for (std::size_t c = 0; c < probe_m.cols(); ++c) {
            const double analytic = base_m(r, c) - stepped_m(r, c);  // alpha = 1
            const double saved = probe_m(r, c);
            probe_m(r, c) = saved + eps;
            const double up = bpr_batch_loss(state, batch, cfg);
            probe_m(r, c) = saved - eps;
            const double down = bpr_batch_loss(state, batch, cfg);
            probe_m(r, c) = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
            max_rel = std::max(max_rel, std::abs(analytic - fd) / denom);
          }
        }
      };
      check_block(state.user_emb, stepped.user_emb, state.user_emb);
      check_block(state.item_emb, stepped.item_emb, state.item_emb);
      CHECK(max_rel < 1e-4);
      ++checked;
    }
  }
  CHECK(checked == 20);
}

TEST_CASE("bpr descends on a separable toy instance") {
  // user 0 prefers item 0, user 1 prefers item 1; 50 steps, windowed decrease
  auto state = init_embeddings(2, 4, 4, 11);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.l2_reg = 0.0;
  const std::vector<BprTriple> batch{{0, 0, 2}, {0, 0, 3}, {1, 1, 2}, {1, 1, 3}};

  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    losses.push_back(bpr_step(state, batch, cfg));
  }
  for (std::size_t w = 10; w < losses.size(); w += 10) {
    CHECK(losses[w] < losses[w - 10]);
  }
  CHECK(state.all_finite());
}

TEST_CASE("bpr rejects an empty batch") {
  auto state = init_embeddings(1, 2, 2, 1);
  CHECK_THROWS_AS(bpr_step(state, {}, {}), EmptyBatchError);
}

TEST_CASE("rank_items sorts by score with ascending-id ties") {
  Matrix items(3, 1);
  items(0, 0) = 0.9;
  items(1, 0) = 0.5;
  items(2, 0) = 0.7;
  const std::vector<double> user{1.0};

  CHECK(rank_items(user, items, {}, 2) == std::vector<ItemId>{0, 2});

  Matrix tied(3, 1);
  tied(0, 0) = tied(1, 0) = tied(2, 0) = 0.4;
  CHECK(rank_items(user, tied, {}, 3) == std::vector<ItemId>{0, 1, 2});
}

TEST_CASE("rank_items matches a full-sort oracle and honors exclusions") {
  Rng rng(404);
  Matrix items(40, 6);
  for (double& v : items.flat()) v = rng.normal();
  std::vector<double> user(6);
  for (auto& v : user) v = rng.normal();
  const std::vector<ItemId> exclude{3, 7, 20, 33};

  const auto ranked = rank_items(user, items, exclude, 10);

  // oracle: score everything, stable full sort
  std::vector<std::pair<double, ItemId>> scored;
  for (ItemId i = 0; i < 40; ++i) {
    if (std::binary_search(exclude.begin(), exclude.end(), i)) continue;
    scored.emplace_back(-predict_score(user, items.row(i)), i);
  }
  std::sort(scored.begin(), scored.end());
  for (std::size_t p = 0; p < 10; ++p) CHECK(ranked[p] == scored[p].second);

  for (ItemId i : ranked) {
    CHECK(!std::binary_search(exclude.begin(), exclude.end(), i));
  }
}

TEST_CASE("rank_items ordering is invariant under positive scaling") {
  Rng rng(15);
  Matrix items(25, 4);
  for (double& v : items.flat()) v = rng.normal();
  std::vector<double> user(4);
  for (auto& v : user) v = rng.normal();

  const auto base = rank_items(user, items, {}, 25);
  Matrix scaled = items;
  for (double& v : scaled.flat()) v *= 7.25;
  CHECK(rank_items(user, scaled, {}, 25) == base);
}

TEST_CASE("rank_items rejects k beyond the candidate pool") {
  Matrix items(5, 2);
  const std::vector<double> user{1.0, 0.0};
  const std::vector<ItemId> exclude{0, 1, 2};
  CHECK_THROWS_AS(rank_items(user, items, exclude, 3), BoundsError);
}
