#include "fastpfrec/fastgnn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace fastpfrec {

void FastGnnConfig::validate() const {
  if (layers < 1) throw ConfigError("layers (H) must be >= 1");
  if (item_update_multiplier < 1) throw ConfigError("item_update_multiplier (h) must be >= 1");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (l2_reg < 0.0) throw ConfigError("l2_reg must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  if (neg_samples_per_pos < 1) throw ConfigError("neg_samples_per_pos must be >= 1");
}

EmbeddingState init_embeddings(std::size_t n_users, std::size_t m_items,
                               std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("embedding dimension k must be >= 1");
  const double bound = 0.5 / std::sqrt(static_cast<double>(k));
  Rng rng(derive_seed(seed, stream::kInit));

  EmbeddingState state;
  state.user_emb = Matrix(n_users, k);
  state.item_emb = Matrix(m_items, k);
  for (double& v : state.user_emb.flat()) v = rng.uniform(-bound, bound);
  for (double& v : state.item_emb.flat()) v = rng.uniform(-bound, bound);
  return state;
}

PropagationGraph PropagationGraph::from_interactions(const InteractionGraph& graph) {
  PropagationGraph pg;
  pg.num_users = graph.num_users();
  pg.num_items = graph.num_items();

  pg.user_offsets.assign(pg.num_users + 1, 0);
  pg.item_offsets.assign(pg.num_items + 1, 0);
  for (UserId u = 0; u < graph.num_users(); ++u) {
    pg.user_offsets[u + 1] = pg.user_offsets[u] +
                             static_cast<std::uint32_t>(graph.neighbors(u).size());
    for (ItemId i : graph.neighbors(u)) ++pg.item_offsets[i + 1];
  }
  for (std::size_t i = 0; i < pg.num_items; ++i) pg.item_offsets[i + 1] += pg.item_offsets[i];

  pg.user_items.resize(graph.num_edges());
  pg.item_users.resize(graph.num_edges());
  std::vector<std::uint32_t> cursor(pg.item_offsets.begin(), pg.item_offsets.end() - 1);
  std::size_t pos = 0;
  for (UserId u = 0; u < graph.num_users(); ++u) {
    for (ItemId i : graph.neighbors(u)) {
      pg.user_items[pos++] = i;
      pg.item_users[cursor[i]++] = u;
    }
  }
  return pg;
}

PropagationGraph PropagationGraph::from_local(const LocalGraph& local) {
  PropagationGraph pg;
  pg.num_users = 1;
  pg.num_items = local.num_items;

  pg.user_offsets = {0, static_cast<std::uint32_t>(local.items.size())};
  pg.user_items = local.items;

  pg.item_offsets.assign(pg.num_items + 1, 0);
  for (ItemId i : local.items) ++pg.item_offsets[i + 1];
  for (std::size_t i = 0; i < pg.num_items; ++i) pg.item_offsets[i + 1] += pg.item_offsets[i];
  pg.item_users.assign(local.items.size(), 0);  // the single local user
  return pg;
}

namespace {

inline double apply_activation(double x, Activation act) {
  return act == Activation::sigmoid ? 1.0 / (1.0 + std::exp(-x)) : x;
}

// Aggregation weight for an edge (u, i) under the configured scheme. Degrees
// come from the perturbed view the kernel runs over.
inline double edge_weight(NeighborWeighting w, std::size_t deg_self, std::size_t deg_other) {
  if (w == NeighborWeighting::mean) return 1.0 / static_cast<double>(deg_self);
  return 1.0 / std::sqrt(static_cast<double>(deg_self) * static_cast<double>(deg_other));
}

void user_pass(const PropagationGraph& g, const Matrix& users, const Matrix& items,
               Matrix& out, const FastGnnConfig& cfg, bool parallel) {
  const std::size_t k = users.cols();
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t u = 0; u < static_cast<std::int64_t>(g.num_users); ++u) {
    auto dst = out.row(static_cast<std::size_t>(u));
    const std::size_t deg = g.user_degree(static_cast<std::size_t>(u));
    if (deg == 0) {  // no messages: row passes through
      std::copy(users.row(u).begin(), users.row(u).end(), dst.begin());
      continue;
    }
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::uint32_t e = g.user_offsets[u]; e < g.user_offsets[u + 1]; ++e) {
      const ItemId i = g.user_items[e];
      const double w = edge_weight(cfg.weighting, deg, g.item_degree(i));
      const auto src = items.row(i);
      for (std::size_t d = 0; d < k; ++d) dst[d] += w * src[d];
    }
    for (std::size_t d = 0; d < k; ++d) dst[d] = apply_activation(dst[d], cfg.activation);
  }
}

// Mirrored rule: items aggregate from their interacting users. Every item row
// advances through the layer; zero-degree rows are carried over.
void item_pass(const PropagationGraph& g, const Matrix& users, const Matrix& items,
               Matrix& out, const FastGnnConfig& cfg, bool parallel) {
  const std::size_t k = items.cols();
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.num_items); ++i) {
    auto dst = out.row(static_cast<std::size_t>(i));
    const std::size_t deg = g.item_degree(static_cast<std::size_t>(i));
    if (deg == 0) {
      std::copy(items.row(i).begin(), items.row(i).end(), dst.begin());
      continue;
    }
    std::fill(dst.begin(), dst.end(), 0.0);
    for (std::uint32_t e = g.item_offsets[i]; e < g.item_offsets[i + 1]; ++e) {
      const UserId u = g.item_users[e];
      const double w = edge_weight(cfg.weighting, deg, g.user_degree(u));
      const auto src = users.row(u);
      for (std::size_t d = 0; d < k; ++d) dst[d] += w * src[d];
    }
    for (std::size_t d = 0; d < k; ++d) dst[d] = apply_activation(dst[d], cfg.activation);
  }
}

void check_shapes(const PropagationGraph& g, const EmbeddingState& state) {
  if (state.user_emb.rows() != g.num_users || state.item_emb.rows() != g.num_items) {
    throw ShapeError("embedding state does not match graph dimensions");
  }
  if (state.user_emb.cols() != state.item_emb.cols()) {
    throw ShapeError("user and item embedding dimensions differ");
  }
}

}  // namespace

void propagate_inplace(const PropagationGraph& graph, EmbeddingState& state,
                       const FastGnnConfig& config, std::size_t epoch,
                       OpCounter& counter, PropagationScratch& scratch,
                       bool parallel) {
  config.validate();
  check_shapes(graph, state);

  const bool refresh = config.is_refresh_epoch(epoch);
  if (!scratch.user_next.same_shape(state.user_emb)) {
    scratch.user_next = Matrix(state.user_emb.rows(), state.user_emb.cols());
  }
  if (refresh && !scratch.item_next.same_shape(state.item_emb)) {
    scratch.item_next = Matrix(state.item_emb.rows(), state.item_emb.cols());
  }

  for (std::size_t layer = 0; layer < config.layers; ++layer) {
    user_pass(graph, state.user_emb, state.item_emb, scratch.user_next, config, parallel);
    if (refresh) {
      item_pass(graph, state.user_emb, state.item_emb, scratch.item_next, config, parallel);
      std::swap(state.item_emb, scratch.item_next);
    }
    std::swap(state.user_emb, scratch.user_next);
  }

  counter.user_update_ops += config.layers * graph.num_users;
  if (refresh) {
    counter.item_update_ops += config.layers * graph.num_items;
    ++counter.item_refresh_epochs;
  }
  ++counter.epochs_run;
}

EmbeddingState propagate(const PropagationGraph& graph, const EmbeddingState& state,
                         const FastGnnConfig& config, std::size_t epoch,
                         OpCounter& counter) {
  EmbeddingState next = state;
  PropagationScratch scratch;
  propagate_inplace(graph, next, config, epoch, counter, scratch, false);
  return next;
}

void propagate_full_update_reference(const PropagationGraph& graph,
                                     EmbeddingState& state,
                                     const FastGnnConfig& config,
                                     OpCounter& counter) {
  config.validate();
  check_shapes(graph, state);

  Matrix user_next(state.user_emb.rows(), state.user_emb.cols());
  Matrix item_next(state.item_emb.rows(), state.item_emb.cols());
  for (std::size_t layer = 0; layer < config.layers; ++layer) {
    user_pass(graph, state.user_emb, state.item_emb, user_next, config, false);
    item_pass(graph, state.user_emb, state.item_emb, item_next, config, false);
    std::swap(state.user_emb, user_next);
    std::swap(state.item_emb, item_next);
  }
  counter.user_update_ops += config.layers * graph.num_users;
  counter.item_update_ops += config.layers * graph.num_items;
  ++counter.item_refresh_epochs;
  ++counter.epochs_run;
}

double predict_score(std::span<const double> user_emb, std::span<const double> item_emb) {
  if (user_emb.size() != item_emb.size()) {
    throw ShapeError("predict_score: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t d = 0; d < user_emb.size(); ++d) s += user_emb[d] * item_emb[d];
  return s;
}

namespace {

constexpr std::uint64_t kItemRowTag = 1ull << 32;

inline double softplus(double x) {
  // log(1 + e^x) without overflow
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_batch(const EmbeddingState& state, std::span<const BprTriple> batch) {
  if (batch.empty()) throw EmptyBatchError("bpr: empty batch");
  for (const auto& t : batch) {
    if (t.user >= state.user_emb.rows() || t.pos_item >= state.item_emb.rows() ||
        t.neg_item >= state.item_emb.rows()) {
      throw ShapeError("bpr: triple index out of range");
    }
  }
}

// Distinct rows a batch touches, keyed so users and items never collide.
std::map<std::uint64_t, std::span<const double>> touched_rows(
    const EmbeddingState& state, std::span<const BprTriple> batch) {
  std::map<std::uint64_t, std::span<const double>> rows;
  for (const auto& t : batch) {
    rows.emplace(t.user, state.user_emb.row(t.user));
    rows.emplace(kItemRowTag | t.pos_item, state.item_emb.row(t.pos_item));
    rows.emplace(kItemRowTag | t.neg_item, state.item_emb.row(t.neg_item));
  }
  return rows;
}

}  // namespace

double bpr_batch_loss(const EmbeddingState& state, std::span<const BprTriple> batch,
                      const TrainConfig& config) {
  check_batch(state, batch);

  double pair_loss = 0.0;
  for (const auto& t : batch) {
    const double s = predict_score(state.user_emb.row(t.user), state.item_emb.row(t.pos_item)) -
                     predict_score(state.user_emb.row(t.user), state.item_emb.row(t.neg_item));
    pair_loss += softplus(-s);
  }
  pair_loss /= static_cast<double>(batch.size());

  if (config.l2_reg == 0.0) return pair_loss;

  const auto rows = touched_rows(state, batch);
  double norm_sum = 0.0;
  for (const auto& [key, row] : rows) norm_sum += l2_norm(row);
  return pair_loss + config.l2_reg * norm_sum / static_cast<double>(rows.size());
}

double bpr_step(EmbeddingState& state, std::span<const BprTriple> batch,
                const TrainConfig& config) {
  check_batch(state, batch);
  const double loss = bpr_batch_loss(state, batch, config);
  if (!std::isfinite(loss)) throw ProtocolError("bpr: non-finite loss");

  const std::size_t k = state.dim();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  // Accumulate full-batch gradients at the incoming state, apply afterwards.
  std::map<std::uint64_t, std::vector<double>> grads;
  const auto grad_row = [&](std::uint64_t key) -> std::vector<double>& {
    auto [it, inserted] = grads.try_emplace(key);
    if (inserted) it->second.assign(k, 0.0);
    return it->second;
  };

  for (const auto& t : batch) {
    const auto u = state.user_emb.row(t.user);
    const auto ip = state.item_emb.row(t.pos_item);
    const auto in = state.item_emb.row(t.neg_item);
    const double s = predict_score(u, ip) - predict_score(u, in);
    const double coeff = (sigmoid(s) - 1.0) * inv_batch;  // d softplus(-s) / ds

    auto& gu = grad_row(t.user);
    auto& gp = grad_row(kItemRowTag | t.pos_item);
    auto& gn = grad_row(kItemRowTag | t.neg_item);
    for (std::size_t d = 0; d < k; ++d) {
      gu[d] += coeff * (ip[d] - in[d]);
      gp[d] += coeff * u[d];
      gn[d] -= coeff * u[d];
    }
  }

  if (config.l2_reg > 0.0) {
    const auto rows = touched_rows(state, batch);
    const double scale = config.l2_reg / static_cast<double>(rows.size());
    for (const auto& [key, row] : rows) {
      const double norm = l2_norm(row);
      if (norm < 1e-300) continue;  // gradient of ||.|| undefined at 0
      auto& g = grad_row(key);
      for (std::size_t d = 0; d < k; ++d) g[d] += scale * row[d] / norm;
    }
  }

  for (const auto& [key, g] : grads) {
    auto row = (key & kItemRowTag)
                   ? state.item_emb.row(key & ~kItemRowTag)
                   : state.user_emb.row(key);
    for (std::size_t d = 0; d < k; ++d) row[d] -= config.learning_rate * g[d];
  }
  return loss;
}

std::vector<ItemId> rank_items(std::span<const double> user_emb,
                               const Matrix& item_emb,
                               std::span<const ItemId> exclude, std::size_t k) {
  const std::size_t m = item_emb.rows();
  if (k + exclude.size() > m) {
    throw BoundsError("rank_items: k exceeds available candidate count");
  }

  std::vector<char> excluded(m, 0);
  for (ItemId i : exclude) excluded[i] = 1;

  std::vector<ItemId> candidates;
  std::vector<double> scores(m, 0.0);
  candidates.reserve(m - exclude.size());
  for (ItemId i = 0; i < m; ++i) {
    if (excluded[i]) continue;
    candidates.push_back(i);
    scores[i] = predict_score(user_emb, item_emb.row(i));
  }

  const auto better = [&scores](ItemId a, ItemId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), better);
  candidates.resize(k);
  return candidates;
}

}  // namespace fastpfrec
