#pragma once

#include <filesystem>
#include <string>

#include "fastpfrec/fastgnn.hpp"
#include "fastpfrec/federation.hpp"

namespace fastpfrec {

// Flat binary checkpoint: N_local, M, k as little-endian u64, then the user
// and item matrices as row-major 64-bit floats.
void save_embedding_state(const EmbeddingState& state, const std::filesystem::path& path);
EmbeddingState load_embedding_state(const std::filesystem::path& path);

// One JSON line per round: {round, mean_loss, hr, ndcg, flagged_clients,
// withheld_nodes, user_ops, item_ops}. hr/ndcg are null off the eval cadence.
std::string round_report_jsonl(const RoundReport& report);

// FNV-1a over bytes; the manifest's content hash.
std::uint64_t fnv1a_hash(std::string_view bytes);
std::uint64_t fnv1a_hash_file(const std::filesystem::path& path);

}  // namespace fastpfrec
