#include "fastpfrec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace fastpfrec {

InteractionGraph::InteractionGraph(std::uint32_t num_users, std::uint32_t num_items,
                                   std::vector<Edge> edges)
    : num_users_(num_users), num_items_(num_items) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  offsets_.assign(num_users_ + 1, 0);
  for (const auto& [u, i] : edges) {
    if (u >= num_users_) throw ShapeError("edge user id out of range");
    if (i >= num_items_) throw ShapeError("edge item id out of range");
    ++offsets_[u + 1];
  }
  for (std::uint32_t u = 0; u < num_users_; ++u) offsets_[u + 1] += offsets_[u];

  items_.resize(edges.size());
  std::size_t pos = 0;
  for (const auto& [u, i] : edges) items_[pos++] = i;  // edges already user-major sorted
}

bool InteractionGraph::has_edge(UserId u, ItemId i) const {
  const auto nbrs = neighbors(u);
  return std::binary_search(nbrs.begin(), nbrs.end(), i);
}

std::vector<Edge> InteractionGraph::edge_list() const {
  std::vector<Edge> edges;
  edges.reserve(num_edges());
  for (UserId u = 0; u < num_users_; ++u) {
    for (ItemId i : neighbors(u)) edges.emplace_back(u, i);
  }
  return edges;
}

void InteractionGraph::validate() const {
  if (offsets_.size() != num_users_ + 1u) throw ShapeError("offset table size");
  for (UserId u = 0; u < num_users_; ++u) {
    const auto nbrs = neighbors(u);
    for (std::size_t j = 0; j < nbrs.size(); ++j) {
      if (nbrs[j] >= num_items_) throw ShapeError("item id out of range");
      if (j > 0 && nbrs[j] <= nbrs[j - 1]) {
        throw ShapeError("adjacency not strictly ascending for user " + std::to_string(u));
      }
    }
  }
}

namespace {

struct TokenTable {
  std::unordered_map<std::string, std::uint32_t> ids;
  std::uint32_t intern(const std::string& token) {
    auto [it, inserted] = ids.emplace(token, static_cast<std::uint32_t>(ids.size()));
    return it->second;
  }
};

}  // namespace

InteractionGraph load_interactions(std::istream& in, InteractionFormat format) {
  TokenTable users, items;
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_number = 0;

  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::string user_token, item_token;
    if (format == InteractionFormat::delimited_text) {
      const auto tab1 = line.find('\t');
      if (tab1 == std::string::npos || tab1 == 0) {
        throw ParseError("expected user<TAB>item record", line_number);
      }
      const auto tab2 = line.find('\t', tab1 + 1);
      user_token = line.substr(0, tab1);
      item_token = (tab2 == std::string::npos) ? line.substr(tab1 + 1)
                                               : line.substr(tab1 + 1, tab2 - tab1 - 1);
      if (item_token.empty()) throw ParseError("empty item token", line_number);
    } else {
      nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
      if (rec.is_discarded() || !rec.is_object() || !rec.contains("user") ||
          !rec.contains("item")) {
        throw ParseError("expected {\"user\": ..., \"item\": ...} record", line_number);
      }
      const auto to_token = [](const nlohmann::json& v) -> std::string {
        return v.is_string() ? v.get<std::string>() : v.dump();
      };
      user_token = to_token(rec["user"]);
      item_token = to_token(rec["item"]);
    }
    edges.emplace_back(users.intern(user_token), items.intern(item_token));
  }

  if (edges.empty()) throw EmptyDatasetError("no interaction records in input");

  return InteractionGraph(static_cast<std::uint32_t>(users.ids.size()),
                          static_cast<std::uint32_t>(items.ids.size()),
                          std::move(edges));
}

void SplitRatios::validate() const {
  if (train < 0 || validation < 0 || test < 0 ||
      std::abs(train + validation + test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }
}

DatasetSplit split_dataset(const InteractionGraph& graph, SplitRatios ratios,
                           std::uint64_t seed) {
  ratios.validate();

  std::vector<Edge> train_edges, val_edges, test_edges;
  for (UserId u = 0; u < graph.num_users(); ++u) {
    const auto nbrs = graph.neighbors(u);
    std::vector<ItemId> shuffled(nbrs.begin(), nbrs.end());

    Rng rng(derive_seed(seed, stream::kSplit, u));
    for (std::size_t j = shuffled.size(); j > 1; --j) {
      std::swap(shuffled[j - 1], shuffled[rng.next_below(j)]);
    }

    const std::size_t n = shuffled.size();
    const auto n_test = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * ratios.test + 1e-9));
    const auto n_val = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * ratios.validation + 1e-9));
    for (std::size_t j = 0; j < n; ++j) {
      if (j < n_test) {
        test_edges.emplace_back(u, shuffled[j]);
      } else if (j < n_test + n_val) {
        val_edges.emplace_back(u, shuffled[j]);
      } else {
        train_edges.emplace_back(u, shuffled[j]);
      }
    }
  }

  DatasetSplit split;
  split.train = InteractionGraph(graph.num_users(), graph.num_items(),
                                 std::move(train_edges));
  std::sort(val_edges.begin(), val_edges.end());
  std::sort(test_edges.begin(), test_edges.end());
  split.validation = std::move(val_edges);
  split.test = std::move(test_edges);
  split.ratios = ratios;
  split.seed = seed;
  return split;
}

std::string split_manifest_json(const DatasetSplit& split) {
  nlohmann::json out;
  out["num_users"] = split.train.num_users();
  out["num_items"] = split.train.num_items();
  out["seed"] = split.seed;
  out["ratios"] = {split.ratios.train, split.ratios.validation, split.ratios.test};
  const auto edges_json = [](const std::vector<Edge>& edges) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [u, i] : edges) arr.push_back({u, i});
    return arr;
  };
  out["train"] = edges_json(split.train.edge_list());
  out["validation"] = edges_json(split.validation);
  out["test"] = edges_json(split.test);
  return out.dump();
}

void PerturbationConfig::validate() const {
  if (!(p_pert >= 0.0 && p_pert <= 1.0)) {
    throw ConfigError("p_pert must lie in [0, 1]");
  }
}

bool LocalGraph::contains(ItemId i) const {
  return std::binary_search(items.begin(), items.end(), i);
}

LocalGraph perturb_graph(std::span<const ItemId> true_items, UserId user,
                         std::uint32_t num_items, const PerturbationConfig& config,
                         Rng& rng) {
  config.validate();

  LocalGraph local;
  local.user_id = user;
  local.num_items = num_items;
  local.items.reserve(true_items.size());

  // Merge walk over [0, M) against the sorted true-item list: one uniform
  // draw per non-interacted item, in ascending item order.
  std::size_t t = 0;
  for (ItemId i = 0; i < num_items; ++i) {
    if (t < true_items.size() && true_items[t] == i) {
      local.items.push_back(i);
      ++t;
      continue;
    }
    if (rng.next_double() < config.p_pert) {
      local.items.push_back(i);
      local.added_items.push_back(i);
    }
  }
  return local;
}

LocalGraph perturb_graph(const InteractionGraph& graph, UserId user,
                         const PerturbationConfig& config, Rng& rng) {
  return perturb_graph(graph.neighbors(user), user, graph.num_items(), config, rng);
}

}  // namespace fastpfrec
