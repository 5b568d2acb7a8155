#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fastpfrec/graph.hpp"
#include "fastpfrec/matrix.hpp"
#include "fastpfrec/rng.hpp"

namespace fastpfrec {

// User rows stay on the client; the item block is the shared parameter
// slice that gets uploaded.
struct EmbeddingState {
  Matrix user_emb;  // N_local x k
  Matrix item_emb;  // M x k
  std::size_t dim() const { return item_emb.cols(); }
  bool all_finite() const { return user_emb.all_finite() && item_emb.all_finite(); }
  friend bool operator==(const EmbeddingState&, const EmbeddingState&) = default;
};

// Entries i.i.d. uniform in [-0.5/sqrt(k), +0.5/sqrt(k)], deterministic per seed.
EmbeddingState init_embeddings(std::size_t n_users, std::size_t m_items,
                               std::size_t k, std::uint64_t seed);

enum class Activation { sigmoid, identity };
enum class NeighborWeighting { symmetric_sqrt, mean };

struct FastGnnConfig {
  std::size_t layers = 2;                   // H
  std::size_t item_update_multiplier = 10;  // h
  Activation activation = Activation::sigmoid;
  NeighborWeighting weighting = NeighborWeighting::symmetric_sqrt;

  std::size_t refresh_period() const { return layers * item_update_multiplier; }
  // Item rows advance only on these epochs; epoch 0 counts as a refresh.
  bool is_refresh_epoch(std::size_t epoch) const {
    return epoch % refresh_period() == 0;
  }
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 0.001;      // alpha
  double l2_reg = 0.0001;            // gamma
  std::size_t batch_size = 256;      // B
  std::size_t local_epochs = 1;      // E, per federation round
  std::size_t neg_samples_per_pos = 1;
  void validate() const;
};

// Row-update accounting behind the amortized-cost claims. user_update_ops and
// item_update_ops count rows advanced per layer; the epoch counters expose the
// refresh schedule directly.
struct OpCounter {
  std::uint64_t user_update_ops = 0;
  std::uint64_t item_update_ops = 0;
  std::uint64_t epochs_run = 0;
  std::uint64_t item_refresh_epochs = 0;

  OpCounter& operator+=(const OpCounter& o) {
    user_update_ops += o.user_update_ops;
    item_update_ops += o.item_update_ops;
    epochs_run += o.epochs_run;
    item_refresh_epochs += o.item_refresh_epochs;
    return *this;
  }
};

// Bipartite adjacency (both directions) the propagation kernels run over.
// Built once per graph; degrees refer to this (possibly perturbed) view.
struct PropagationGraph {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::uint32_t> user_offsets;  // u -> neighbor items
  std::vector<ItemId> user_items;
  std::vector<std::uint32_t> item_offsets;  // i -> neighbor users
  std::vector<UserId> item_users;

  static PropagationGraph from_interactions(const InteractionGraph& graph);
  static PropagationGraph from_local(const LocalGraph& local);

  std::size_t user_degree(std::size_t u) const {
    return user_offsets[u + 1] - user_offsets[u];
  }
  std::size_t item_degree(std::size_t i) const {
    return item_offsets[i + 1] - item_offsets[i];
  }
};

struct PropagationScratch {
  Matrix user_next;
  Matrix item_next;
};

// One training epoch of message passing. User rows advance every call; item
// rows advance only on refresh epochs and pass through otherwise. Each layer
// reads the previous layer's values on both sides.
void propagate_inplace(const PropagationGraph& graph, EmbeddingState& state,
                       const FastGnnConfig& config, std::size_t epoch,
                       OpCounter& counter, PropagationScratch& scratch,
                       bool parallel = false);

EmbeddingState propagate(const PropagationGraph& graph, const EmbeddingState& state,
                         const FastGnnConfig& config, std::size_t epoch,
                         OpCounter& counter);

// Serial reference: user and item rows both advance every layer of every
// epoch, ignoring the schedule. Kept as the oracle for equivalence tests and
// as the full-update baseline in benchmarks.
void propagate_full_update_reference(const PropagationGraph& graph,
                                     EmbeddingState& state,
                                     const FastGnnConfig& config,
                                     OpCounter& counter);

double predict_score(std::span<const double> user_emb, std::span<const double> item_emb);

struct BprTriple {
  UserId user;
  ItemId pos_item;
  ItemId neg_item;
};

// Loss of one batch at the current state: mean softplus(-(y_pos - y_neg))
// plus l2_reg times the mean L2 norm of the distinct touched rows.
double bpr_batch_loss(const EmbeddingState& state, std::span<const BprTriple> batch,
                      const TrainConfig& config);

// One SGD step on the batch: gradients of bpr_batch_loss accumulated at the
// incoming state, then applied at rate learning_rate. Returns the pre-step loss.
double bpr_step(EmbeddingState& state, std::span<const BprTriple> batch,
                const TrainConfig& config);

// Top-k non-excluded items by score, descending; ties break toward the
// smaller item id. `exclude` must be sorted ascending.
std::vector<ItemId> rank_items(std::span<const double> user_emb,
                               const Matrix& item_emb,
                               std::span<const ItemId> exclude, std::size_t k);

}  // namespace fastpfrec
