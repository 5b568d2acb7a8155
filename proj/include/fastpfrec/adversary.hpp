#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fastpfrec/federation.hpp"
#include "fastpfrec/graph.hpp"

namespace fastpfrec {

enum class AttackKind { gaussian_noise, gradient_poison };
enum class Architecture { direct, trusted_node };

struct AttackConfig {
  double malicious_fraction = 0.3;
  AttackKind attack_kind = AttackKind::gaussian_noise;
  // Empty means auto-calibration: 10x the pooled per-coordinate std of the
  // honest uploads at the attack round.
  std::optional<double> sigma_attack;
  std::size_t trials = 30;
  std::uint64_t seed = 0;
  void validate() const;
};

struct FailureScenario {
  std::size_t failed_node_count = 0;
  std::size_t compromised_node_count = 0;
  std::uint64_t selection_seed = 0;
};

struct SyntheticSpec {
  std::size_t num_users = 200;
  std::size_t num_items = 300;
  std::size_t latent_rank = 8;
  std::size_t interactions_per_user = 20;
  std::uint64_t seed = 2025;
};

// Plants rank-r user/item factors and connects each user to its top-scoring
// items plus a few uniform noise edges, so ranking metrics have recoverable
// structure to find.
InteractionGraph make_synthetic_dataset(const SyntheticSpec& spec);

// gaussian-noise adds N(0, sigma^2) per coordinate; gradient-poison negates
// the payload first.
void corrupt_update(ParameterUpdate& update, AttackKind kind, double sigma, Rng& rng);

// L2 norm of the global-block displacement caused by one aggregation round.
double measure_server_damage(std::span<const double> w_before,
                             std::span<const double> w_after);

struct AttackTrial {
  double damage_direct = 0.0;
  double damage_trusted = 0.0;
  double sigma_attack = 0.0;
  std::size_t malicious_total = 0;
  std::size_t malicious_flagged = 0;
  std::size_t honest_total = 0;
  std::size_t honest_flagged = 0;
};

struct ResilienceReport {
  double server_damage_mean = 0.0;  // selected architecture
  double server_damage_std = 0.0;
  double damage_direct_mean = 0.0;
  double damage_direct_std = 0.0;
  double damage_trusted_mean = 0.0;
  double damage_trusted_std = 0.0;
  double protection_rate = 0.0;      // 1 - trusted/direct; NaN when no attackers
  double detection_rate = 0.0;
  double false_positive_rate = 0.0;
  double containment_rate = 0.0;     // NaN outside compromised-node runs
  std::vector<AttackTrial> trials;
};

struct AttackExperimentSetup {
  SyntheticSpec dataset;
  SimulationSetup sim;
  std::size_t warmup_rounds = 3;
};

// Repeated single-round attacks from a shared warm state. Each trial produces
// one set of client uploads, corrupts the malicious subset, and aggregates the
// identical uploads through both architectures so damages are paired.
ResilienceReport run_attack_experiment(const AttackExperimentSetup& setup,
                                       const AttackConfig& attack,
                                       Architecture architecture);

struct FailureOutcome {
  std::size_t failed_nodes = 0;
  std::size_t compromised_nodes = 0;
  double hr = 0.0;
  double ndcg = 0.0;
  double ndcg_retention = 1.0;   // vs the clean baseline of the same seed
  double containment_rate = 1.0; // NDCG retention, compromised-node runs only
};

// Trains to completion per scenario and reports final ranking quality.
// Scenario index 0 should be the clean baseline; retentions are relative to it.
std::vector<FailureOutcome> run_failure_experiment(
    const SyntheticSpec& dataset, const SimulationSetup& sim,
    std::span<const FailureScenario> scenarios, double node_attack_sigma = 1.0);

std::string resilience_report_json(const ResilienceReport& report);

}  // namespace fastpfrec
