#include "fastpfrec/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace fastpfrec {

namespace {

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((v >> (8 * b)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::ifstream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return v;
}

void write_doubles(std::ofstream& out, std::span<const double> values) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(out, bits);
  }
}

void read_doubles(std::ifstream& in, std::span<double> values) {
  for (double& v : values) {
    const std::uint64_t bits = read_u64(in);
    std::memcpy(&v, &bits, 8);
  }
}

}  // namespace

void save_embedding_state(const EmbeddingState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ProtocolError("cannot open checkpoint for writing: " + path.string());
  write_u64(out, state.user_emb.rows());
  write_u64(out, state.item_emb.rows());
  write_u64(out, state.dim());
  write_doubles(out, state.user_emb.flat());
  write_doubles(out, state.item_emb.flat());
  if (!out) throw ProtocolError("checkpoint write failed: " + path.string());
}

EmbeddingState load_embedding_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ProtocolError("cannot open checkpoint: " + path.string());
  const std::uint64_t n = read_u64(in);
  const std::uint64_t m = read_u64(in);
  const std::uint64_t k = read_u64(in);
  EmbeddingState state;
  state.user_emb = Matrix(n, k);
  state.item_emb = Matrix(m, k);
  read_doubles(in, state.user_emb.flat());
  read_doubles(in, state.item_emb.flat());
  if (!in) throw ProtocolError("truncated checkpoint: " + path.string());
  return state;
}

std::string round_report_jsonl(const RoundReport& report) {
  nlohmann::json line;
  line["round"] = report.round;
  line["mean_loss"] =
      std::isfinite(report.mean_loss) ? nlohmann::json(report.mean_loss) : nullptr;
  line["hr"] = report.hr.has_value() ? nlohmann::json(*report.hr) : nullptr;
  line["ndcg"] = report.ndcg.has_value() ? nlohmann::json(*report.ndcg) : nullptr;
  line["flagged_clients"] = report.flagged_clients;
  line["withheld_nodes"] = report.withheld_nodes;
  line["user_ops"] = report.user_ops;
  line["item_ops"] = report.item_ops;
  return line.dump();
}

std::uint64_t fnv1a_hash(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t fnv1a_hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ProtocolError("cannot hash missing file: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return fnv1a_hash(content);
}

}  // namespace fastpfrec
