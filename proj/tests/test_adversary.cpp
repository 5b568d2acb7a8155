#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "fastpfrec/adversary.hpp"
#include "fastpfrec/eval.hpp"

using namespace fastpfrec;

TEST_CASE("synthetic dataset construction arithmetic") {
  const SyntheticSpec spec{200, 300, 8, 20, 11};
  const auto graph = make_synthetic_dataset(spec);
  CHECK(graph.num_users() == 200);
  CHECK(graph.num_items() == 300);
  CHECK(graph.num_edges() == 4000);  // exactly 20 per user
  CHECK(graph.density() == doctest::Approx(4000.0 / 60000.0).epsilon(1e-12));
  for (UserId u = 0; u < 200; ++u) CHECK(graph.neighbors(u).size() == 20);
  graph.validate();
}

TEST_CASE("synthetic dataset is deterministic per seed") {
  const SyntheticSpec spec{50, 80, 4, 10, 7};
  const auto a = make_synthetic_dataset(spec);
  const auto b = make_synthetic_dataset(spec);
  CHECK(a.edge_list() == b.edge_list());
  SyntheticSpec other = spec;
  other.seed = 8;
  CHECK(make_synthetic_dataset(other).edge_list() != a.edge_list());
}

TEST_CASE("synthetic dataset rejects degenerate sizes") {
  CHECK_THROWS_AS(make_synthetic_dataset({0, 10, 2, 5, 1}), ConfigError);
  CHECK_THROWS_AS(make_synthetic_dataset({10, 10, 20, 5, 1}), ConfigError);
  CHECK_THROWS_AS(make_synthetic_dataset({10, 10, 2, 50, 1}), ConfigError);
}

TEST_CASE("random rankings sit at the analytic K/m hit-rate baseline") {
  // 2000 random users, one relevant item each: HR@10 ~ 10/300
  const std::size_t m = 300, n = 2000, k = 8;
  const auto state = init_embeddings(n, m, k, 515);
  std::vector<std::vector<ItemId>> relevant(n);
  Rng rng(99);
  for (auto& r : relevant) r = {static_cast<ItemId>(rng.next_below(m))};

  std::vector<UserEvalCase> cases(n);
  for (std::size_t u = 0; u < n; ++u) {
    cases[u].user_emb = state.user_emb.row(u);
    cases[u].item_emb = &state.item_emb;
    cases[u].relevant = relevant[u];
  }
  const auto metrics = evaluate_users(cases, 10);
  const double p = 10.0 / 300.0;
  const double se = std::sqrt(p * (1 - p) / static_cast<double>(n));
  CHECK(std::abs(metrics.hr_at_k - p) < 3.0 * se);
}

TEST_CASE("corrupt_update with sigma=0 leaves gaussian payloads unchanged") {
  ParameterUpdate u;
  u.payload = {1.0, -2.0, 3.0};
  Rng rng(1);
  corrupt_update(u, AttackKind::gaussian_noise, 0.0, rng);
  CHECK(u.payload == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("gradient poison negates the payload before noising") {
  ParameterUpdate u;
  u.payload = {1.0, -2.0, 3.0};
  Rng rng(1);
  corrupt_update(u, AttackKind::gradient_poison, 0.0, rng);
  CHECK(u.payload == std::vector<double>{-1.0, 2.0, -3.0});
}

TEST_CASE("gaussian corruption displaces by roughly sigma * sqrt(d)") {
  const std::size_t d = 1000;
  const double sigma = 0.5;
  const std::size_t trials = 200;
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    ParameterUpdate u;
    u.payload.assign(d, 0.0);
    Rng rng(derive_seed(606, t));
    corrupt_update(u, AttackKind::gaussian_noise, sigma, rng);
    total += l2_norm(u.payload);
  }
  const double mean = total / static_cast<double>(trials);
  // chi_d mean ~ sigma * sqrt(d - 0.5); sd ~ sigma / sqrt(2)
  const double expected = sigma * std::sqrt(static_cast<double>(d) - 0.5);
  const double se = sigma / std::sqrt(2.0 * static_cast<double>(trials));
  CHECK(std::abs(mean - expected) < 3.0 * se);
}

TEST_CASE("measure_server_damage hand cases and oracle") {
  CHECK(measure_server_damage(std::vector<double>{1.0, 2.0},
                              std::vector<double>{1.0, 2.0}) == 0.0);
  CHECK(measure_server_damage(std::vector<double>{0.0, 0.0},
                              std::vector<double>{3.0, 4.0}) == 5.0);

  Rng rng(2);
  std::vector<double> a(64), b(64);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  double oracle = 0.0;
  for (std::size_t j = 64; j-- > 0;) oracle += (a[j] - b[j]) * (a[j] - b[j]);
  CHECK(std::abs(measure_server_damage(a, b) - std::sqrt(oracle)) < 1e-10);

  CHECK_THROWS_AS(measure_server_damage(std::vector<double>{1.0},
                                        std::vector<double>{1.0, 2.0}),
                  ShapeError);
}

TEST_CASE("a compromised aggregate moves W_s by exactly its 1/T share") {
  const std::size_t t_nodes = 8, dim = 16;
  std::vector<NodeAggregate> clean;
  Rng rng(3);
  for (std::uint32_t n = 0; n < t_nodes; ++n) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    clean.push_back({n, std::move(v)});
  }
  std::vector<double> planted(dim);
  for (double& x : planted) x = rng.normal(0.0, 5.0);

  auto corrupted = clean;
  for (std::size_t d = 0; d < dim; ++d) corrupted[3].value[d] += planted[d];

  const auto w_clean = server_aggregate(clean);
  const auto w_bad = server_aggregate(corrupted);
  for (std::size_t d = 0; d < dim; ++d) {
    CHECK(std::abs((w_bad[d] - w_clean[d]) - planted[d] / t_nodes) < 1e-12);
  }
}

TEST_CASE("detection and false-positive rates are nonincreasing in mu") {
  // fixed update population, swept threshold
  Rng rng(1234);
  const std::size_t dim = 48;
  std::vector<ParameterUpdate> updates;
  std::vector<char> is_malicious(40, 0);
  const std::vector<double> reference(dim, 0.0);
  for (std::uint32_t c = 0; c < 40; ++c) {
    ParameterUpdate u;
    u.client_id = c;
    u.payload.assign(dim, 0.0);
    for (double& v : u.payload) v = rng.uniform(-0.1, 0.1);
    if (c % 4 == 0) {
      is_malicious[c] = 1;
      for (double& v : u.payload) v += rng.normal(0.0, 0.8);
    }
    updates.push_back(std::move(u));
  }

  double prev_det = 2.0, prev_fpr = 2.0;
  for (double mu : {2.0, 2.5, 3.0, 3.5, 4.0}) {
    const auto result = check_anomaly(updates, reference, mu, 0.9);
    std::size_t det = 0, det_n = 0, fp = 0, fp_n = 0;
    for (std::size_t j = 0; j < updates.size(); ++j) {
      if (is_malicious[j]) {
        ++det_n;
        det += result.flags[j];
      } else {
        ++fp_n;
        fp += result.flags[j];
      }
    }
    const double det_rate = static_cast<double>(det) / det_n;
    const double fpr = static_cast<double>(fp) / fp_n;
    CHECK(det_rate <= prev_det);
    CHECK(fpr <= prev_fpr);
    prev_det = det_rate;
    prev_fpr = fpr;
  }
}

TEST_CASE("attack experiment smoke: trusted beats direct on every trial") {
  AttackExperimentSetup setup;
  setup.dataset = {60, 80, 4, 10, 77};
  setup.sim.embedding_dim = 8;
  setup.sim.gnn.activation = Activation::identity;
  setup.sim.train.learning_rate = 0.05;
  setup.sim.ldp.lambda = 0.05;
  setup.sim.fed.num_nodes = 5;
  setup.sim.fed.rounds = 3;
  setup.sim.fed.eval_interval = 0;
  setup.sim.fed.parallel = false;
  setup.sim.seed = 2025;
  setup.warmup_rounds = 2;

  AttackConfig attack;
  attack.malicious_fraction = 0.3;
  attack.trials = 8;

  const auto report = run_attack_experiment(setup, attack, Architecture::trusted_node);
  REQUIRE(report.trials.size() == 8);
  for (const auto& trial : report.trials) {
    CHECK(trial.damage_trusted < trial.damage_direct);
    CHECK(trial.sigma_attack > 0.0);
  }
  CHECK(report.protection_rate > 0.5);
  CHECK(report.detection_rate > 0.8);
  CHECK(report.false_positive_rate < 0.2);
  CHECK(report.server_damage_mean == report.damage_trusted_mean);

  // rates live in [0, 1]
  CHECK(report.detection_rate <= 1.0);
  CHECK(report.false_positive_rate >= 0.0);
}

TEST_CASE("attack experiment with no attackers reports not-applicable rates") {
  AttackExperimentSetup setup;
  setup.dataset = {30, 40, 4, 8, 5};
  setup.sim.embedding_dim = 4;
  setup.sim.fed.num_nodes = 3;
  setup.sim.fed.rounds = 2;
  setup.sim.fed.eval_interval = 0;
  setup.sim.fed.parallel = false;
  setup.warmup_rounds = 1;

  AttackConfig attack;
  attack.malicious_fraction = 0.0;
  attack.trials = 3;

  const auto report = run_attack_experiment(setup, attack, Architecture::direct);
  CHECK(std::isnan(report.protection_rate));
  CHECK(std::isnan(report.detection_rate));
  CHECK(report.false_positive_rate >= 0.0);
  CHECK(report.server_damage_mean == report.damage_direct_mean);

  const auto json = resilience_report_json(report);
  CHECK(json.find("\"protection_rate\":null") != std::string::npos);
}

TEST_CASE("failure experiment reports per-scenario quality") {
  SyntheticSpec dataset{40, 60, 4, 10, 2025};
  SimulationSetup sim;
  sim.embedding_dim = 8;
  sim.gnn.activation = Activation::identity;
  sim.train.learning_rate = 0.05;
  sim.ldp.lambda = 0.0;
  sim.fed.num_nodes = 5;
  sim.fed.rounds = 6;
  sim.fed.eval_interval = 0;
  sim.fed.parallel = false;

  const std::vector<FailureScenario> scenarios{
      {0, 0, 1}, {1, 0, 1}, {0, 1, 1}};
  const auto outcomes = run_failure_experiment(dataset, sim, scenarios, 0.5);
  REQUIRE(outcomes.size() == 3);
  CHECK(outcomes[0].ndcg_retention == 1.0);
  CHECK(std::isnan(outcomes[0].containment_rate));
  CHECK(outcomes[1].failed_nodes == 1);
  CHECK(outcomes[2].compromised_nodes == 1);
  CHECK(outcomes[2].containment_rate >= 0.0);
  CHECK(outcomes[2].containment_rate <= 1.0);
}
