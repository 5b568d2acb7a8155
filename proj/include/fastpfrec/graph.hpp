#pragma once

#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fastpfrec/errors.hpp"
#include "fastpfrec/rng.hpp"

namespace fastpfrec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;
using Edge = std::pair<UserId, ItemId>;

// Bipartite implicit-feedback interaction graph in CSR form. Immutable after
// construction; safe to share read-only across parallel workers.
class InteractionGraph {
 public:
  InteractionGraph() = default;

  // Builds from an edge list; duplicates are removed, adjacency is sorted.
  InteractionGraph(std::uint32_t num_users, std::uint32_t num_items,
                   std::vector<Edge> edges);

  std::uint32_t num_users() const { return num_users_; }
  std::uint32_t num_items() const { return num_items_; }
  std::size_t num_edges() const { return items_.size(); }

  double density() const {
    return static_cast<double>(num_edges()) /
           (static_cast<double>(num_users_) * static_cast<double>(num_items_));
  }

  std::span<const ItemId> neighbors(UserId u) const {
    return {items_.data() + offsets_[u], items_.data() + offsets_[u + 1]};
  }

  bool has_edge(UserId u, ItemId i) const;

  std::vector<Edge> edge_list() const;

  // Checks structural invariants; throws ShapeError on violation.
  void validate() const;

 private:
  std::uint32_t num_users_ = 0;
  std::uint32_t num_items_ = 0;
  std::vector<std::uint32_t> offsets_;  // size num_users_ + 1
  std::vector<ItemId> items_;           // sorted per user
};

enum class InteractionFormat { delimited_text, json_lines };

// Reads user/item records, densifying tokens to contiguous ids in first-seen
// order. Duplicate records collapse to one edge.
InteractionGraph load_interactions(std::istream& in, InteractionFormat format);

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
  void validate() const;
};

struct DatasetSplit {
  InteractionGraph train;
  std::vector<Edge> validation;
  std::vector<Edge> test;
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

// Per-user stratified split. A user contributes floor(n*r_test) test and
// floor(n*r_val) validation edges; everything else stays in train, so every
// user with a test edge also has a train edge.
DatasetSplit split_dataset(const InteractionGraph& graph, SplitRatios ratios,
                           std::uint64_t seed);

// JSON manifest of the split (edge lists per part) for cross-run reproducibility.
std::string split_manifest_json(const DatasetSplit& split);

struct PerturbationConfig {
  double p_pert = 0.1;
  void validate() const;
};

// One client's (possibly perturbed) graph view. `items` is N'(u) sorted
// ascending; `added_items` flags the injected false edges so evaluation can
// keep them out of the ground truth.
struct LocalGraph {
  UserId user_id = 0;
  std::uint32_t num_items = 0;
  std::vector<ItemId> items;
  std::vector<ItemId> added_items;

  bool contains(ItemId i) const;
};

// Adds each non-interacted item with probability p_pert (one independent
// uniform draw per item). Original edges are never removed.
LocalGraph perturb_graph(std::span<const ItemId> true_items, UserId user,
                         std::uint32_t num_items, const PerturbationConfig& config,
                         Rng& rng);

LocalGraph perturb_graph(const InteractionGraph& graph, UserId user,
                         const PerturbationConfig& config, Rng& rng);

}  // namespace fastpfrec
