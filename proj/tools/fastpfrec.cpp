// fastpfrec command line: run / sweep / attack / eval experiment drivers.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fastpfrec/adversary.hpp"
#include "fastpfrec/config.hpp"
#include "fastpfrec/io.hpp"

namespace fs = std::filesystem;
using namespace fastpfrec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

fs::path output_root() {
  if (const char* env = std::getenv("FASTPFREC_OUTPUT_ROOT")) return fs::path(env);
  return fs::current_path();
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
};

ExperimentConfig resolve_config(const CommonArgs& args) {
  ExperimentConfig config;
  if (!args.config_path.empty()) {
    config = ExperimentConfig::load_file(args.config_path);
  }
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override must be key=value, got '" + kv + "'");
    }
    config.set_key(kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.validate();
  return config;
}

DatasetSplit load_split(const ExperimentConfig& config) {
  InteractionGraph graph;
  if (config.use_synthetic) {
    SyntheticSpec spec = config.synthetic;
    spec.seed = config.seed;
    graph = make_synthetic_dataset(spec);
  } else {
    std::ifstream in(config.dataset_path);
    if (!in) throw ConfigError("cannot open dataset: " + config.dataset_path);
    graph = load_interactions(in, config.dataset_format);
  }
  std::cerr << "dataset: N=" << graph.num_users() << " M=" << graph.num_items()
            << " |E|=" << graph.num_edges() << " density=" << graph.density()
            << "\n";
  return split_dataset(graph, config.split, config.seed);
}

void write_manifest(const ExperimentConfig& config, const fs::path& dir) {
  std::ostringstream manifest;
  manifest << config.serialize();
  std::uint64_t input_hash = fnv1a_hash(config.serialize());
  if (!config.use_synthetic) {
    input_hash ^= fnv1a_hash_file(config.dataset_path);
  }
  manifest << "# content_hash=" << std::hex << input_hash << "\n";
  std::ofstream out(dir / "manifest.txt");
  out << manifest.str();
}

struct RunArtifacts {
  RankingMetrics final_metrics;
  double final_loss = 0.0;
  std::uint64_t user_ops = 0;
  std::uint64_t item_ops = 0;
  double wall_seconds = 0.0;
};

RunArtifacts execute_run(const ExperimentConfig& config, const fs::path& dir,
                         bool write_outputs) {
  const auto split = load_split(config);
  Simulation sim(split, config.simulation_setup());

  if (config.attack.has_value() && config.attack->malicious_fraction > 0.0) {
    // standing attack over the whole run
    std::vector<std::uint32_t> ids(sim.clients().size());
    std::iota(ids.begin(), ids.end(), 0u);
    Rng rng(derive_seed(config.seed, stream::kAttack));
    for (std::size_t j = ids.size(); j > 1; --j) {
      std::swap(ids[j - 1], ids[rng.next_below(j)]);
    }
    ids.resize(static_cast<std::size_t>(
        std::llround(config.attack->malicious_fraction *
                     static_cast<double>(sim.clients().size()))));
    sim.set_malicious(ids);
    const double sigma = config.attack->sigma_attack.value_or(1.0);
    const auto kind = config.attack->attack_kind;
    const std::uint64_t seed = config.seed;
    sim.set_upload_tamper([sigma, kind, seed](std::uint32_t client, std::size_t round,
                                              std::vector<double>& payload) {
      ParameterUpdate u;
      u.client_id = client;
      u.payload = std::move(payload);
      Rng r(derive_seed(seed, stream::kAttack, client, round));
      corrupt_update(u, kind, sigma, r);
      payload = std::move(u.payload);
    });
  }
  if (config.failure.has_value()) {
    Rng rng(derive_seed(config.seed, stream::kNodeAttack));
    std::vector<std::uint32_t> node_ids(config.fed.num_nodes);
    std::iota(node_ids.begin(), node_ids.end(), 0u);
    for (std::size_t j = node_ids.size(); j > 1; --j) {
      std::swap(node_ids[j - 1], node_ids[rng.next_below(j)]);
    }
    for (std::size_t j = 0; j < config.failure->failed_node_count; ++j) {
      sim.set_node_status(node_ids[j], NodeStatus::failed);
    }
  }

  const auto start = std::chrono::steady_clock::now();
  const auto history = sim.run();
  const auto elapsed = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - start)
                           .count();

  RunArtifacts artifacts;
  artifacts.wall_seconds = elapsed;
  if (!history.empty()) artifacts.final_loss = history.back().mean_loss;
  for (const auto& r : history) {
    artifacts.user_ops += r.user_ops;
    artifacts.item_ops += r.item_ops;
  }
  artifacts.final_metrics = sim.evaluate(config.fed.eval_k);

  if (write_outputs) {
    std::ofstream rounds(dir / "rounds.jsonl");
    for (const auto& r : history) rounds << round_report_jsonl(r) << "\n";

    nlohmann::json summary;
    summary["hr"] = artifacts.final_metrics.hr_at_k;
    summary["ndcg"] = artifacts.final_metrics.ndcg_at_k;
    summary["k"] = artifacts.final_metrics.k;
    summary["users_evaluated"] = artifacts.final_metrics.users_evaluated;
    summary["final_loss"] = artifacts.final_loss;
    summary["rounds"] = history.size();
    summary["user_ops"] = artifacts.user_ops;
    summary["item_ops"] = artifacts.item_ops;
    summary["wall_seconds"] = artifacts.wall_seconds;
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";

    // final model snapshot: stacked user rows plus the global block
    EmbeddingState snapshot;
    const std::size_t k = config.embedding_dim;
    snapshot.user_emb = Matrix(sim.clients().size(), k);
    for (std::size_t c = 0; c < sim.clients().size(); ++c) {
      const auto row = sim.clients()[c].emb.user_emb.row(0);
      std::copy(row.begin(), row.end(), snapshot.user_emb.row(c).begin());
    }
    snapshot.item_emb = Matrix(split.train.num_items(), k);
    std::copy(sim.server().global_block.begin(), sim.server().global_block.end(),
              snapshot.item_emb.flat().begin());
    save_embedding_state(snapshot, dir / "checkpoint.bin");
  }
  return artifacts;
}

int cmd_run(const CommonArgs& args) {
  const auto config = resolve_config(args);
  const fs::path dir = output_root() / config.output_dir;
  fs::create_directories(dir);
  write_manifest(config, dir);
  const auto artifacts = execute_run(config, dir, /*write_outputs=*/true);
  std::cout << "hr@" << config.fed.eval_k << "=" << artifacts.final_metrics.hr_at_k
            << " ndcg@" << config.fed.eval_k << "="
            << artifacts.final_metrics.ndcg_at_k << " loss=" << artifacts.final_loss
            << " wall=" << artifacts.wall_seconds << "s\n";
  return kExitOk;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis,
              const std::vector<std::string>& values) {
  const auto& axes = sweep_axes();
  const auto it = axes.find(axis);
  if (it == axes.end()) {
    std::ostringstream msg;
    msg << "unknown sweep axis '" << axis << "'; valid axes:";
    for (const auto& [name, key] : axes) msg << " " << name;
    throw ConfigError(msg.str());
  }

  const auto base = resolve_config(args);
  const fs::path dir = output_root() / base.output_dir;
  fs::create_directories(dir);

  std::ofstream table(dir / ("sweep_" + axis + ".tsv"));
  const std::string header =
      axis + "\thr\tndcg\tfinal_loss\titem_ops\tuser_ops\twall_seconds";
  table << header << "\n";
  std::cout << header << "\n";

  for (const auto& value : values) {
    ExperimentConfig config = base;
    config.set_key(it->second, value);
    config.validate();
    const fs::path subdir = dir / (axis + "_" + value);
    fs::create_directories(subdir);
    write_manifest(config, subdir);
    const auto artifacts = execute_run(config, subdir, /*write_outputs=*/true);
    std::ostringstream row;
    row << value << "\t" << artifacts.final_metrics.hr_at_k << "\t"
        << artifacts.final_metrics.ndcg_at_k << "\t" << artifacts.final_loss << "\t"
        << artifacts.item_ops << "\t" << artifacts.user_ops << "\t"
        << artifacts.wall_seconds;
    table << row.str() << "\n";
    std::cout << row.str() << "\n";
  }
  return kExitOk;
}

int cmd_attack(const CommonArgs& args, const std::string& architecture_name,
               std::size_t failure_sweep_max) {
  auto config = resolve_config(args);
  if (!config.attack.has_value()) config.attack.emplace();
  if (!config.use_synthetic) {
    throw ConfigError("attack experiments run on the synthetic generator");
  }

  const fs::path dir = output_root() / config.output_dir;
  fs::create_directories(dir);
  write_manifest(config, dir);

  AttackExperimentSetup setup;
  setup.dataset = config.synthetic;
  setup.dataset.seed = config.seed;
  setup.sim = config.simulation_setup();
  setup.sim.fed.rounds = std::min<std::size_t>(setup.sim.fed.rounds, 20);

  const Architecture architecture = architecture_name == "direct"
                                        ? Architecture::direct
                                        : Architecture::trusted_node;
  const auto report = run_attack_experiment(setup, *config.attack, architecture);
  std::ofstream(dir / ("attack_" + architecture_name + ".json"))
      << resilience_report_json(report) << "\n";
  std::cout << "damage_direct=" << report.damage_direct_mean << "±"
            << report.damage_direct_std
            << " damage_trusted=" << report.damage_trusted_mean << "±"
            << report.damage_trusted_std
            << " protection=" << report.protection_rate
            << " detection=" << report.detection_rate
            << " fpr=" << report.false_positive_rate << "\n";

  if (failure_sweep_max > 0) {
    std::vector<FailureScenario> scenarios;
    for (std::size_t f = 0; f <= failure_sweep_max; ++f) {
      scenarios.push_back({f, 0, config.seed});
    }
    const auto outcomes =
        run_failure_experiment(config.synthetic, config.simulation_setup(), scenarios);
    std::ofstream table(dir / "failure_sweep.tsv");
    table << "failed_nodes\thr\tndcg\tndcg_retention\n";
    std::cout << "failed_nodes\thr\tndcg\tndcg_retention\n";
    for (const auto& o : outcomes) {
      std::ostringstream row;
      row << o.failed_nodes << "\t" << o.hr << "\t" << o.ndcg << "\t"
          << o.ndcg_retention;
      table << row.str() << "\n";
      std::cout << row.str() << "\n";
    }
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const CommonArgs& args) {
  const auto config = resolve_config(args);
  const auto split = load_split(config);
  const auto state = load_embedding_state(checkpoint_path);
  if (state.user_emb.rows() != split.train.num_users() ||
      state.item_emb.rows() != split.train.num_items()) {
    throw ConfigError("checkpoint shape does not match the dataset");
  }

  std::vector<std::vector<ItemId>> test_items(split.train.num_users());
  for (const auto& [u, i] : split.test) test_items[u].push_back(i);
  std::vector<UserEvalCase> cases;
  for (UserId u = 0; u < split.train.num_users(); ++u) {
    std::sort(test_items[u].begin(), test_items[u].end());
    UserEvalCase c;
    c.user_emb = state.user_emb.row(u);
    c.item_emb = &state.item_emb;
    c.exclude = split.train.neighbors(u);
    c.relevant = test_items[u];
    cases.push_back(c);
  }
  const auto metrics = evaluate_users(cases, config.fed.eval_k, config.fed.parallel);

  nlohmann::json out;
  out["hr"] = metrics.hr_at_k;
  out["ndcg"] = metrics.ndcg_at_k;
  out["k"] = metrics.k;
  out["users_evaluated"] = metrics.users_evaluated;
  std::cout << out.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FastPFRec three-tier federated recommendation simulator"};
  app.require_subcommand(1);

  CommonArgs common;
  const auto add_common = [&common](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "key=value config file");
    cmd->add_option("--set", common.overrides,
                    "config override key=value (repeatable)");
  };

  auto* run = app.add_subcommand("run", "run one federated experiment");
  add_common(run);

  auto* sweep = app.add_subcommand("sweep", "sweep one config axis");
  add_common(sweep);
  std::string axis;
  std::vector<std::string> values;
  sweep->add_option("--axis", axis, "axis name (e.g. lambda, k, T, h)")->required();
  sweep->add_option("--values", values, "axis values")->required();

  auto* attack = app.add_subcommand("attack", "attack & failure experiments");
  add_common(attack);
  std::string architecture = "trusted";
  std::size_t failure_sweep = 0;
  attack->add_option("--architecture", architecture,
                     "aggregation architecture: direct or trusted")
      ->check(CLI::IsMember({"direct", "trusted"}));
  attack->add_option("--failure-sweep", failure_sweep,
                     "also sweep 0..N failed nodes");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "flat binary checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(common);
    if (sweep->parsed()) return cmd_sweep(common, axis, values);
    if (attack->parsed()) return cmd_attack(common, architecture, failure_sweep);
    if (eval->parsed()) return cmd_eval(checkpoint, common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}
