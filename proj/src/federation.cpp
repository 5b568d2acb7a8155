#include "fastpfrec/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fastpfrec {

namespace {
constexpr std::uint64_t kParticipation = 10;
constexpr double kMadEpsilon = 1e-12;

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  return (n % 2 == 1) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}
}  // namespace

std::vector<std::vector<std::uint32_t>> assign_clients(std::size_t num_clients,
                                                       std::size_t num_nodes,
                                                       std::uint64_t seed) {
  if (num_nodes < 1) throw ConfigError("num_nodes must be >= 1");
  if (num_clients < num_nodes) throw ConfigError("need at least one client per node");

  std::vector<std::uint32_t> ids(num_clients);
  std::iota(ids.begin(), ids.end(), 0u);
  Rng rng(derive_seed(seed, stream::kAssign));
  for (std::size_t j = ids.size(); j > 1; --j) {
    std::swap(ids[j - 1], ids[rng.next_below(j)]);
  }

  std::vector<std::vector<std::uint32_t>> partition(num_nodes);
  for (std::size_t idx = 0; idx < ids.size(); ++idx) {
    partition[idx % num_nodes].push_back(ids[idx]);
  }
  for (auto& bucket : partition) std::sort(bucket.begin(), bucket.end());
  return partition;
}

AnomalyResult check_anomaly(std::span<const ParameterUpdate> updates,
                            std::span<const double> reference, double mu, double nu) {
  if (updates.empty()) throw ProtocolError("check_anomaly: no updates");

  AnomalyResult result;
  result.distances.reserve(updates.size());
  for (const auto& update : updates) {
    result.distances.push_back(l2_distance(update.payload, reference));
  }

  const double med = median_of(result.distances);
  std::vector<double> deviations;
  deviations.reserve(result.distances.size());
  for (double d : result.distances) deviations.push_back(std::abs(d - med));
  const double mad = median_of(std::move(deviations));

  result.z_scores.reserve(result.distances.size());
  result.flags.assign(updates.size(), 0);
  std::size_t flagged = 0;
  for (std::size_t j = 0; j < result.distances.size(); ++j) {
    const double z = (mad < kMadEpsilon)
                         ? 0.0
                         : 0.6745 * (result.distances[j] - med) / mad;
    result.z_scores.push_back(z);
    if (std::abs(z) > mu) {
      result.flags[j] = 1;
      ++flagged;
    }
  }
  result.node_trips =
      static_cast<double>(flagged) / static_cast<double>(updates.size()) > nu;
  return result;
}

std::optional<std::vector<double>> trusted_aggregate(
    std::span<const ParameterUpdate> updates, const AnomalyResult& anomaly) {
  if (anomaly.flags.size() != updates.size()) {
    throw ProtocolError("trusted_aggregate: flag/update count mismatch");
  }
  if (anomaly.node_trips) return std::nullopt;

  std::vector<double> sum;
  std::size_t count = 0;
  for (std::size_t j = 0; j < updates.size(); ++j) {
    if (anomaly.flags[j]) continue;
    const auto& payload = updates[j].payload;
    if (sum.empty()) sum.assign(payload.size(), 0.0);
    if (payload.size() != sum.size()) {
      throw ShapeError("trusted_aggregate: payload size mismatch");
    }
    for (std::size_t d = 0; d < payload.size(); ++d) sum[d] += payload[d];
    ++count;
  }
  if (count == 0) return std::nullopt;
  for (double& v : sum) v /= static_cast<double>(count);
  return sum;
}

std::vector<double> server_aggregate(std::span<const NodeAggregate> aggregates) {
  if (aggregates.empty()) {
    throw ProtocolError("server_aggregate: no participating nodes");
  }
  std::vector<double> sum(aggregates.front().value.size(), 0.0);
  for (const auto& agg : aggregates) {
    if (agg.value.size() != sum.size()) {
      throw ShapeError("server_aggregate: aggregate size mismatch");
    }
    for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += agg.value[d];
  }
  for (double& v : sum) v /= static_cast<double>(aggregates.size());
  return sum;
}

void blend_update(std::span<double> theta, std::span<const double> w_s, double beta) {
  if (theta.size() != w_s.size()) throw ShapeError("blend_update: size mismatch");
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
  for (std::size_t d = 0; d < theta.size(); ++d) {
    theta[d] = (1.0 - beta) * theta[d] + beta * w_s[d];
  }
}

void FederationConfig::validate() const {
  if (num_nodes < 1) throw ConfigError("num_nodes must be >= 1");
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
  if (mu <= 0.0) throw ConfigError("mu must be > 0");
  if (!(nu >= 0.0 && nu < 1.0)) throw ConfigError("nu must lie in [0, 1)");
  if (eval_k < 1) throw ConfigError("eval_k must be >= 1");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("participation must lie in (0, 1]");
  }
}

Simulation::Simulation(const DatasetSplit& split, SimulationSetup setup)
    : setup_(std::move(setup)) {
  setup_.fed.validate();
  setup_.gnn.validate();
  setup_.train.validate();
  setup_.ldp.validate();
  setup_.perturb.validate();

  const auto& graph = split.train;
  const std::size_t num_clients = graph.num_users();
  const std::size_t m = graph.num_items();
  const std::size_t k = setup_.embedding_dim;
  if (num_clients < setup_.fed.num_nodes) {
    throw ConfigError("fewer clients than trusted nodes");
  }

  // One shared initialization: user row u and the common item block.
  const EmbeddingState init = init_embeddings(num_clients, m, k, setup_.seed);

  const auto partition =
      assign_clients(num_clients, setup_.fed.num_nodes, setup_.seed);

  clients_.resize(num_clients);
  nodes_.resize(setup_.fed.num_nodes);
  for (std::uint32_t n = 0; n < nodes_.size(); ++n) {
    nodes_[n].node_id = n;
    nodes_[n].clients = partition[n];
    nodes_[n].mu = setup_.fed.mu;
    nodes_[n].nu = setup_.fed.nu;
    for (std::uint32_t c : partition[n]) clients_[c].node_id = n;
  }

  for (std::uint32_t c = 0; c < num_clients; ++c) {
    auto& client = clients_[c];
    client.client_id = c;
    const auto nbrs = graph.neighbors(c);
    client.train_items.assign(nbrs.begin(), nbrs.end());
    client.emb.user_emb = Matrix(1, k);
    std::copy(init.user_emb.row(c).begin(), init.user_emb.row(c).end(),
              client.emb.user_emb.row(0).begin());
    client.emb.item_emb = init.item_emb;
  }

  server_.global_block.assign(init.item_emb.flat().begin(), init.item_emb.flat().end());
  server_.round = 0;
  server_.max_rounds = setup_.fed.rounds;
  server_.beta = setup_.fed.beta;

  test_items_.assign(num_clients, {});
  for (const auto& [u, i] : split.test) test_items_[u].push_back(i);
  for (auto& items : test_items_) std::sort(items.begin(), items.end());

  consecutive_flags_.assign(num_clients, 0);
}

void Simulation::set_malicious(std::span<const std::uint32_t> client_ids) {
  for (auto& client : clients_) client.role = Role::honest;
  for (std::uint32_t c : client_ids) clients_.at(c).role = Role::malicious;
}

void Simulation::set_node_status(std::uint32_t node_id, NodeStatus status) {
  nodes_.at(node_id).status = status;
}

void Simulation::train_client(ClientState& client, std::size_t round_index,
                              std::vector<double>& payload_out, double& loss_out,
                              OpCounter& ops_out) const {
  const std::size_t m = client.emb.item_emb.rows();

  Rng perturb_rng(derive_seed(setup_.seed, stream::kPerturb, client.client_id, round_index));
  client.graph = perturb_graph(client.train_items, client.client_id,
                               static_cast<std::uint32_t>(m), setup_.perturb, perturb_rng);
  const PropagationGraph pgraph = PropagationGraph::from_local(client.graph);

  Rng train_rng(derive_seed(setup_.seed, stream::kTrain, client.client_id, round_index));
  PropagationScratch scratch;

  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  const bool can_sample_negatives = client.graph.items.size() < m;

  for (std::size_t e = 0; e < setup_.train.local_epochs; ++e) {
    const std::size_t epoch = round_index * setup_.train.local_epochs + e;
    propagate_inplace(pgraph, client.emb, setup_.gnn, epoch, ops_out, scratch, false);

    if (client.train_items.empty() || !can_sample_negatives) continue;

    std::vector<ItemId> positives = client.train_items;
    for (std::size_t j = positives.size(); j > 1; --j) {
      std::swap(positives[j - 1], positives[train_rng.next_below(j)]);
    }

    std::vector<BprTriple> triples;
    triples.reserve(positives.size() * setup_.train.neg_samples_per_pos);
    for (ItemId pos : positives) {
      for (std::size_t s = 0; s < setup_.train.neg_samples_per_pos; ++s) {
        ItemId neg;
        do {
          neg = static_cast<ItemId>(train_rng.next_below(m));
        } while (client.graph.contains(neg));
        triples.push_back({0u, pos, neg});  // local user row 0
      }
    }

    if (e + 1 == setup_.train.local_epochs) {
      loss_sum = 0.0;
      loss_count = 0;
    }
    for (std::size_t start = 0; start < triples.size(); start += setup_.train.batch_size) {
      const std::size_t len = std::min(setup_.train.batch_size, triples.size() - start);
      const double loss = bpr_step(
          client.emb, std::span<const BprTriple>(triples.data() + start, len), setup_.train);
      loss_sum += loss * static_cast<double>(len);
      loss_count += len;
    }
  }

  loss_out = loss_count > 0 ? loss_sum / static_cast<double>(loss_count)
                            : std::numeric_limits<double>::quiet_NaN();

  payload_out.assign(client.emb.item_emb.flat().begin(),
                     client.emb.item_emb.flat().end());
  Rng ldp_rng(derive_seed(setup_.seed, stream::kLdp, client.client_id, round_index));
  add_laplace_noise_inplace(payload_out, setup_.ldp, ldp_rng);
}

ClientUploadBatch Simulation::client_uploads(std::size_t round_index, bool commit) {
  const std::size_t n = clients_.size();
  std::vector<char> participates(n, 1);
  std::vector<char> banned(n, 0);

  if (setup_.fed.participation < 1.0) {
    Rng rng(derive_seed(setup_.seed, kParticipation, round_index));
    for (std::size_t c = 0; c < n; ++c) {
      participates[c] = rng.next_double() < setup_.fed.participation ? 1 : 0;
    }
  }
  if (setup_.fed.permanent_ban_after > 0) {
    for (std::size_t c = 0; c < n; ++c) {
      if (consecutive_flags_[c] >= setup_.fed.permanent_ban_after) banned[c] = 1;
    }
  }

  std::vector<char> active(n, 0);
  for (std::size_t c = 0; c < n; ++c) {
    const auto& node = nodes_[clients_[c].node_id];
    active[c] = participates[c] && !banned[c] && node.status != NodeStatus::failed;
  }

  std::vector<std::vector<double>> payloads(n);
  std::vector<double> losses(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<OpCounter> ops(n);

#pragma omp parallel for schedule(dynamic, 4) if (setup_.fed.parallel)
  for (std::int64_t ci = 0; ci < static_cast<std::int64_t>(n); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    if (!active[c]) continue;
    if (commit) {
      train_client(clients_[c], round_index, payloads[c], losses[c], ops[c]);
    } else {
      ClientState copy = clients_[c];
      train_client(copy, round_index, payloads[c], losses[c], ops[c]);
    }
  }

  ClientUploadBatch batch;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t c = 0; c < n; ++c) {
    if (!active[c]) continue;
    if (commit) {
      clients_[c].ops += ops[c];
      clients_[c].last_loss = losses[c];
    }
    batch.ops += ops[c];
    if (std::isfinite(losses[c])) {
      loss_sum += losses[c];
      ++loss_count;
    }

    ParameterUpdate update;
    update.client_id = static_cast<std::uint32_t>(c);
    update.payload = std::move(payloads[c]);
    update.round = round_index;
    if (clients_[c].role == Role::malicious && upload_tamper_) {
      upload_tamper_(update.client_id, round_index, update.payload);
    }
    batch.uploads.push_back(std::move(update));
  }
  batch.mean_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count)
                                   : std::numeric_limits<double>::quiet_NaN();
  return batch;
}

Simulation::NodeRoundResult Simulation::node_step(
    const std::vector<ParameterUpdate>& uploads, std::span<const double> reference,
    std::size_t round_index) {
  // Index uploads by client id for ascending-order gathering per node.
  std::vector<const ParameterUpdate*> by_client(clients_.size(), nullptr);
  for (const auto& u : uploads) by_client[u.client_id] = &u;

  NodeRoundResult result;
  std::vector<char> flagged_this_round(clients_.size(), 0);

  for (auto& node : nodes_) {
    node.last_flagged.clear();
    if (node.status == NodeStatus::failed) {
      result.withheld_nodes.push_back(node.node_id);
      continue;
    }

    std::vector<ParameterUpdate> received;
    received.reserve(node.clients.size());
    for (std::uint32_t c : node.clients) {
      if (by_client[c] != nullptr) received.push_back(*by_client[c]);
    }
    if (received.empty()) {
      result.withheld_nodes.push_back(node.node_id);
      continue;
    }

    const AnomalyResult anomaly =
        check_anomaly(received, reference, node.mu, node.nu);
    for (std::size_t j = 0; j < received.size(); ++j) {
      if (anomaly.flags[j]) {
        node.last_flagged.push_back(received[j].client_id);
        flagged_this_round[received[j].client_id] = 1;
        result.flagged_clients.push_back(received[j].client_id);
      }
    }

    auto aggregate = trusted_aggregate(received, anomaly);
    if (!aggregate.has_value()) {
      result.withheld_nodes.push_back(node.node_id);
      continue;
    }
    if (node.status == NodeStatus::compromised && aggregate_tamper_) {
      aggregate_tamper_(node.node_id, round_index, *aggregate);
    }
    node.last_aggregate = *aggregate;
    result.aggregates.push_back({node.node_id, std::move(*aggregate)});
  }

  // A clean upload resets the streak; clients that did not upload (banned,
  // failed node, non-participating) keep their count.
  for (std::size_t c = 0; c < clients_.size(); ++c) {
    if (flagged_this_round[c]) {
      ++consecutive_flags_[c];
    } else if (by_client[c] != nullptr) {
      consecutive_flags_[c] = 0;
    }
  }
  std::sort(result.flagged_clients.begin(), result.flagged_clients.end());
  return result;
}

RoundReport Simulation::run_round() {
  const std::size_t q = round_;
  const std::vector<double> reference = server_.global_block;

  ClientUploadBatch batch = client_uploads(q, /*commit=*/true);
  NodeRoundResult node_result = node_step(batch.uploads, reference, q);

  bool applied = false;
  if (!node_result.aggregates.empty()) {
    server_.global_block = server_aggregate(node_result.aggregates);
    applied = true;
  }
  server_.round = q + 1;

  if (applied) {
#pragma omp parallel for schedule(static) if (setup_.fed.parallel)
    for (std::int64_t ci = 0; ci < static_cast<std::int64_t>(clients_.size()); ++ci) {
      auto& client = clients_[static_cast<std::size_t>(ci)];
      if (nodes_[client.node_id].status == NodeStatus::failed) continue;
      blend_update(client.emb.item_emb.flat(), server_.global_block, setup_.fed.beta);
    }
  }

  RoundReport report;
  report.round = q;
  report.mean_loss = batch.mean_loss;
  report.flagged_clients = std::move(node_result.flagged_clients);
  report.withheld_nodes = std::move(node_result.withheld_nodes);
  report.user_ops = batch.ops.user_update_ops;
  report.item_ops = batch.ops.item_update_ops;

  ++round_;
  return report;
}

std::vector<RoundReport> Simulation::run() {
  std::vector<RoundReport> history;
  history.reserve(setup_.fed.rounds);
  for (std::size_t q = 0; q < setup_.fed.rounds; ++q) {
    RoundReport report = run_round();
    const bool eval_due = setup_.fed.eval_interval > 0 &&
                          ((q + 1) % setup_.fed.eval_interval == 0 ||
                           q + 1 == setup_.fed.rounds);
    if (eval_due) {
      const RankingMetrics metrics = evaluate(setup_.fed.eval_k);
      report.hr = metrics.hr_at_k;
      report.ndcg = metrics.ndcg_at_k;
    }
    history.push_back(std::move(report));
  }
  return history;
}

RankingMetrics Simulation::evaluate(std::size_t k) const {
  std::vector<UserEvalCase> cases;
  cases.reserve(clients_.size());
  for (const auto& client : clients_) {
    if (nodes_[client.node_id].status == NodeStatus::failed) continue;
    UserEvalCase c;
    c.user_emb = client.emb.user_emb.row(0);
    c.item_emb = &client.emb.item_emb;
    // N'(u) already contains the train items plus the false edges.
    c.exclude = client.graph.items.empty()
                    ? std::span<const ItemId>(client.train_items)
                    : std::span<const ItemId>(client.graph.items);
    c.relevant = test_items_[client.client_id];
    cases.push_back(c);
  }
  return evaluate_users(cases, k, setup_.fed.parallel);
}

}  // namespace fastpfrec
