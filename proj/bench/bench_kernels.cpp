// Benchmarks the OpenMP kernels against their serial counterparts and the
// scheduled item-update path against the full-update reference.
#include <chrono>
#include <cstdio>
#include <omp.h>

#include "fastpfrec/adversary.hpp"
#include "fastpfrec/federation.hpp"

using namespace fastpfrec;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

double time_propagation(const PropagationGraph& graph, std::size_t k,
                        const FastGnnConfig& cfg, std::size_t epochs, bool parallel,
                        bool full_update) {
  auto state = init_embeddings(graph.num_users, graph.num_items, k, 7);
  OpCounter ops;
  PropagationScratch scratch;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    if (full_update) {
      propagate_full_update_reference(graph, state, cfg, ops);
    } else {
      propagate_inplace(graph, state, cfg, epoch, ops, scratch, parallel);
    }
  }
  return seconds_since(start) / static_cast<double>(epochs);
}

double time_round(const DatasetSplit& split, SimulationSetup setup, bool parallel,
                  std::size_t rounds) {
  setup.fed.parallel = parallel;
  Simulation sim(split, setup);
  sim.run_round();  // warm caches before timing
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t q = 0; q < rounds; ++q) sim.run_round();
  return seconds_since(start) / static_cast<double>(rounds);
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", omp_get_max_threads());

  {
    std::printf("-- propagation: scheduled vs full update (serial, 2000x3000 graph) --\n");
    const SyntheticSpec spec{2000, 3000, 8, 30, 99};
    const auto graph = make_synthetic_dataset(spec);
    const auto pg = PropagationGraph::from_interactions(graph);

    FastGnnConfig cfg;  // H=2
    const std::size_t epochs = 40;
    const std::size_t k = 32;

    cfg.item_update_multiplier = 10;
    const double t_h10 = time_propagation(pg, k, cfg, epochs, false, false);
    cfg.item_update_multiplier = 1;
    const double t_h1 = time_propagation(pg, k, cfg, epochs, false, false);
    const double t_full = time_propagation(pg, k, cfg, epochs, false, true);

    std::printf("  h=10 scheduled      %9.3f ms/epoch\n", t_h10 * 1e3);
    std::printf("  h=1  scheduled      %9.3f ms/epoch\n", t_h1 * 1e3);
    std::printf("  full-update ref     %9.3f ms/epoch\n", t_full * 1e3);
    std::printf("  h=10 / h=1 ratio    %9.3f\n", t_h10 / t_h1);
    std::printf("  h=10 / full ratio   %9.3f\n\n", t_h10 / t_full);
  }

  {
    std::printf("-- propagation: serial vs OpenMP (same graph, h=1) --\n");
    const SyntheticSpec spec{2000, 3000, 8, 30, 99};
    const auto graph = make_synthetic_dataset(spec);
    const auto pg = PropagationGraph::from_interactions(graph);
    FastGnnConfig cfg;
    cfg.item_update_multiplier = 1;
    const double serial = time_propagation(pg, 32, cfg, 40, false, false);
    const double parallel = time_propagation(pg, 32, cfg, 40, true, false);
    std::printf("  serial   %9.3f ms/epoch\n", serial * 1e3);
    std::printf("  openmp   %9.3f ms/epoch   speedup %.2fx\n\n", parallel * 1e3,
                serial / parallel);
  }

  {
    std::printf("-- federated round: serial vs OpenMP (400 clients) --\n");
    const SyntheticSpec spec{400, 500, 8, 20, 3};
    const auto split = split_dataset(make_synthetic_dataset(spec), {}, 2025);
    SimulationSetup setup;
    setup.embedding_dim = 16;
    setup.gnn.activation = Activation::identity;
    setup.train.learning_rate = 0.05;
    setup.fed.num_nodes = 10;
    setup.fed.rounds = 0;
    setup.fed.eval_interval = 0;

    const double serial = time_round(split, setup, false, 10);
    const double parallel = time_round(split, setup, true, 10);
    std::printf("  serial   %9.3f ms/round\n", serial * 1e3);
    std::printf("  openmp   %9.3f ms/round   speedup %.2fx\n", parallel * 1e3,
                serial / parallel);
  }
  return 0;
}
