#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "fastpfrec/adversary.hpp"
#include "fastpfrec/federation.hpp"

namespace fastpfrec {

// Flat dotted-key experiment configuration. Defaults follow the reference
// operating point: k=64, B=256, alpha=0.001, gamma=0.0001, H=2, T=10, K=10,
// lambda=0.1, p_pert=0.1, seed=2025.
struct ExperimentConfig {
  // dataset: either a file or the synthetic generator
  std::string dataset_path;
  InteractionFormat dataset_format = InteractionFormat::delimited_text;
  bool use_synthetic = false;
  SyntheticSpec synthetic;

  SplitRatios split;

  std::size_t embedding_dim = 64;
  FastGnnConfig gnn;
  TrainConfig train;
  LdpConfig ldp;
  PerturbationConfig perturb;
  FederationConfig fed;

  std::uint64_t seed = 2025;
  std::string output_dir = "out";

  // optional adversary scenario for `run`
  std::optional<AttackConfig> attack;
  std::optional<FailureScenario> failure;

  void validate() const;

  SimulationSetup simulation_setup() const;

  // Serialization as sorted key=value lines; parse(serialize(c)) == c.
  std::string serialize() const;
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load_file(const std::string& path);

  // Applies one dotted key; throws ConfigError for unknown keys/bad values.
  void set_key(const std::string& key, const std::string& value);
};

// Axes cmd_sweep understands, mapped onto config keys.
const std::map<std::string, std::string>& sweep_axes();

}  // namespace fastpfrec
