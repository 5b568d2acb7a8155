#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fastpfrec/eval.hpp"
#include "fastpfrec/fastgnn.hpp"
#include "fastpfrec/graph.hpp"
#include "fastpfrec/privacy.hpp"

namespace fastpfrec {

enum class Role { honest, malicious };
enum class NodeStatus { healthy, failed, compromised };

struct ClientState {
  std::uint32_t client_id = 0;  // == global user id
  std::uint32_t node_id = 0;
  Role role = Role::honest;
  std::vector<ItemId> train_items;  // N(u) within the train split, sorted
  LocalGraph graph;                 // perturbed view, rebuilt each round
  EmbeddingState emb;               // 1 x k user row + local copy of the shared block
  OpCounter ops;
  double last_loss = 0.0;
};

struct TrustedNodeState {
  std::uint32_t node_id = 0;
  std::vector<std::uint32_t> clients;  // sorted ascending
  double mu = 3.5;
  double nu = 0.5;
  NodeStatus status = NodeStatus::healthy;
  std::vector<double> last_aggregate;
  std::vector<std::uint32_t> last_flagged;  // client ids isolated this round
};

// The server never sees anything below node granularity.
struct ServerState {
  std::vector<double> global_block;  // W_s, flattened M x k
  std::size_t round = 0;             // q
  std::size_t max_rounds = 0;        // Q
  double beta = 0.5;
};

struct ParameterUpdate {
  std::uint32_t client_id = 0;  // visible to the trusted node only
  std::vector<double> payload;
  std::size_t round = 0;
};

struct NodeAggregate {
  std::uint32_t node_id = 0;
  std::vector<double> value;
};

// Balanced random partition of clients across nodes; sizes differ by at most one.
std::vector<std::vector<std::uint32_t>> assign_clients(std::size_t num_clients,
                                                       std::size_t num_nodes,
                                                       std::uint64_t seed);

struct AnomalyResult {
  std::vector<char> flags;       // per update, 1 = outlier
  bool node_trips = false;       // flagged fraction exceeded nu
  std::vector<double> distances; // L2 distance to the reference
  std::vector<double> z_scores;  // 0.6745 * (d - median) / MAD
};

// MAD robust z-score screen of client uploads against the previous global
// block. Degenerate MAD (all distances equal) yields z = 0 everywhere.
AnomalyResult check_anomaly(std::span<const ParameterUpdate> updates,
                            std::span<const double> reference, double mu, double nu);

// Mean over unflagged payloads; nullopt when the node withholds (tripped or
// nothing left to average).
std::optional<std::vector<double>> trusted_aggregate(
    std::span<const ParameterUpdate> updates, const AnomalyResult& anomaly);

// Mean over participating node aggregates. Throws ProtocolError when empty.
std::vector<double> server_aggregate(std::span<const NodeAggregate> aggregates);

// theta <- (1 - beta) * theta + beta * w_s, coordinate-wise.
void blend_update(std::span<double> theta, std::span<const double> w_s, double beta);

struct FederationConfig {
  std::size_t num_nodes = 10;  // T
  double beta = 0.5;
  double mu = 3.5;
  double nu = 0.5;
  std::size_t rounds = 500;  // Q
  std::size_t eval_interval = 10;
  std::size_t eval_k = 10;  // K
  double participation = 1.0;
  std::size_t permanent_ban_after = 0;  // consecutive flags; 0 = per-round isolation only
  bool parallel = true;
  void validate() const;
};

struct SimulationSetup {
  std::size_t embedding_dim = 64;  // k
  FastGnnConfig gnn;
  TrainConfig train;
  LdpConfig ldp;
  PerturbationConfig perturb;
  FederationConfig fed;
  std::uint64_t seed = 2025;
};

struct RoundReport {
  std::size_t round = 0;
  double mean_loss = 0.0;
  std::optional<double> hr;
  std::optional<double> ndcg;
  std::vector<std::uint32_t> flagged_clients;
  std::vector<std::uint32_t> withheld_nodes;
  std::uint64_t user_ops = 0;
  std::uint64_t item_ops = 0;
};

struct ClientUploadBatch {
  std::vector<ParameterUpdate> uploads;  // ascending client id; skipped clients absent
  double mean_loss = 0.0;
  OpCounter ops;
};

// Payload tamper hooks used by the adversary module; called after LDP noise.
using UploadTamper =
    std::function<void(std::uint32_t client_id, std::size_t round, std::vector<double>& payload)>;
using AggregateTamper =
    std::function<void(std::uint32_t node_id, std::size_t round, std::vector<double>& value)>;

// The round orchestrator: client training, trusted-node screening and
// aggregation, server averaging, and the blended distribution back to clients.
// Client work runs under OpenMP when fed.parallel is set; every reduction that
// reaches a report is performed serially in ascending id order.
class Simulation {
 public:
  Simulation(const DatasetSplit& split, SimulationSetup setup);

  void set_malicious(std::span<const std::uint32_t> client_ids);
  void set_node_status(std::uint32_t node_id, NodeStatus status);
  void set_upload_tamper(UploadTamper tamper) { upload_tamper_ = std::move(tamper); }
  void set_aggregate_tamper(AggregateTamper tamper) { aggregate_tamper_ = std::move(tamper); }

  // Client-side step for a given round index. commit=false trains throwaway
  // copies, leaving all state untouched (used for repeated attack trials).
  ClientUploadBatch client_uploads(std::size_t round_index, bool commit);

  RoundReport run_round();
  std::vector<RoundReport> run();

  RankingMetrics evaluate(std::size_t k) const;

  const ServerState& server() const { return server_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const std::vector<TrustedNodeState>& nodes() const { return nodes_; }
  const SimulationSetup& setup() const { return setup_; }
  std::size_t current_round() const { return round_; }

 private:
  struct NodeRoundResult {
    std::vector<NodeAggregate> aggregates;
    std::vector<std::uint32_t> withheld_nodes;
    std::vector<std::uint32_t> flagged_clients;
  };

  void train_client(ClientState& client, std::size_t round_index,
                    std::vector<double>& payload_out, double& loss_out,
                    OpCounter& ops_out) const;
  NodeRoundResult node_step(const std::vector<ParameterUpdate>& uploads,
                            std::span<const double> reference, std::size_t round_index);

  SimulationSetup setup_;
  std::vector<ClientState> clients_;
  std::vector<TrustedNodeState> nodes_;
  ServerState server_;
  std::vector<std::vector<ItemId>> test_items_;  // per user, sorted
  std::vector<std::uint32_t> consecutive_flags_;
  std::size_t round_ = 0;
  UploadTamper upload_tamper_;
  AggregateTamper aggregate_tamper_;
};

}  // namespace fastpfrec
