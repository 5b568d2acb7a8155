#include "fastpfrec/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace fastpfrec {

namespace {

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid numeric value for " + key + ": '" + value + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("invalid integer value for " + key + ": '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("invalid boolean value for " + key + ": '" + value + "'");
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void ExperimentConfig::set_key(const std::string& key, const std::string& value) {
  if (key == "dataset.path") {
    dataset_path = value;
  } else if (key == "dataset.format") {
    if (value == "tsv") dataset_format = InteractionFormat::delimited_text;
    else if (value == "jsonl") dataset_format = InteractionFormat::json_lines;
    else throw ConfigError("dataset.format must be tsv or jsonl");
  } else if (key == "dataset.synthetic") {
    use_synthetic = parse_bool(key, value);
  } else if (key == "synthetic.users") {
    synthetic.num_users = parse_uint(key, value);
  } else if (key == "synthetic.items") {
    synthetic.num_items = parse_uint(key, value);
  } else if (key == "synthetic.rank") {
    synthetic.latent_rank = parse_uint(key, value);
  } else if (key == "synthetic.edges_per_user") {
    synthetic.interactions_per_user = parse_uint(key, value);
  } else if (key == "split.train") {
    split.train = parse_double(key, value);
  } else if (key == "split.validation") {
    split.validation = parse_double(key, value);
  } else if (key == "split.test") {
    split.test = parse_double(key, value);
  } else if (key == "model.k") {
    embedding_dim = parse_uint(key, value);
  } else if (key == "model.layers") {
    gnn.layers = parse_uint(key, value);
  } else if (key == "model.item_update_multiplier") {
    gnn.item_update_multiplier = parse_uint(key, value);
  } else if (key == "model.activation") {
    if (value == "sigmoid") gnn.activation = Activation::sigmoid;
    else if (value == "identity") gnn.activation = Activation::identity;
    else throw ConfigError("model.activation must be sigmoid or identity");
  } else if (key == "model.weighting") {
    if (value == "symmetric-sqrt") gnn.weighting = NeighborWeighting::symmetric_sqrt;
    else if (value == "mean") gnn.weighting = NeighborWeighting::mean;
    else throw ConfigError("model.weighting must be symmetric-sqrt or mean");
  } else if (key == "train.alpha") {
    train.learning_rate = parse_double(key, value);
  } else if (key == "train.gamma") {
    train.l2_reg = parse_double(key, value);
  } else if (key == "train.batch_size") {
    train.batch_size = parse_uint(key, value);
  } else if (key == "train.local_epochs") {
    train.local_epochs = parse_uint(key, value);
  } else if (key == "train.neg_samples") {
    train.neg_samples_per_pos = parse_uint(key, value);
  } else if (key == "privacy.lambda") {
    ldp.lambda = parse_double(key, value);
  } else if (key == "perturb.p_pert") {
    perturb.p_pert = parse_double(key, value);
  } else if (key == "federation.nodes") {
    fed.num_nodes = parse_uint(key, value);
  } else if (key == "federation.beta") {
    fed.beta = parse_double(key, value);
  } else if (key == "federation.mu") {
    fed.mu = parse_double(key, value);
  } else if (key == "federation.nu") {
    fed.nu = parse_double(key, value);
  } else if (key == "federation.rounds") {
    fed.rounds = parse_uint(key, value);
  } else if (key == "federation.eval_interval") {
    fed.eval_interval = parse_uint(key, value);
  } else if (key == "federation.participation") {
    fed.participation = parse_double(key, value);
  } else if (key == "federation.permanent_ban_after") {
    fed.permanent_ban_after = parse_uint(key, value);
  } else if (key == "federation.parallel") {
    fed.parallel = parse_bool(key, value);
  } else if (key == "eval.k") {
    fed.eval_k = parse_uint(key, value);
  } else if (key == "run.seed") {
    seed = parse_uint(key, value);
    synthetic.seed = seed;
  } else if (key == "run.output_dir") {
    output_dir = value;
  } else if (key == "attack.enabled") {
    if (parse_bool(key, value)) {
      if (!attack.has_value()) attack.emplace();
    } else {
      attack.reset();
    }
  } else if (key == "attack.malicious_fraction") {
    if (!attack.has_value()) attack.emplace();
    attack->malicious_fraction = parse_double(key, value);
  } else if (key == "attack.kind") {
    if (!attack.has_value()) attack.emplace();
    if (value == "gaussian-noise") attack->attack_kind = AttackKind::gaussian_noise;
    else if (value == "gradient-poison") attack->attack_kind = AttackKind::gradient_poison;
    else throw ConfigError("attack.kind must be gaussian-noise or gradient-poison");
  } else if (key == "attack.sigma") {
    if (!attack.has_value()) attack.emplace();
    if (value == "auto") attack->sigma_attack.reset();
    else attack->sigma_attack = parse_double(key, value);
  } else if (key == "attack.trials") {
    if (!attack.has_value()) attack.emplace();
    attack->trials = parse_uint(key, value);
  } else if (key == "failure.failed_nodes") {
    if (!failure.has_value()) failure.emplace();
    failure->failed_node_count = parse_uint(key, value);
  } else if (key == "failure.compromised_nodes") {
    if (!failure.has_value()) failure.emplace();
    failure->compromised_node_count = parse_uint(key, value);
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

void ExperimentConfig::validate() const {
  if (!use_synthetic && dataset_path.empty()) {
    throw ConfigError("dataset.path is required unless dataset.synthetic=true");
  }
  split.validate();
  if (embedding_dim == 0) throw ConfigError("model.k must be >= 1");
  gnn.validate();
  train.validate();
  ldp.validate();
  perturb.validate();
  fed.validate();
  if (attack.has_value()) attack->validate();
  if (failure.has_value() &&
      failure->failed_node_count + failure->compromised_node_count > fed.num_nodes) {
    throw ConfigError("failure scenario exceeds federation.nodes");
  }
}

SimulationSetup ExperimentConfig::simulation_setup() const {
  SimulationSetup setup;
  setup.embedding_dim = embedding_dim;
  setup.gnn = gnn;
  setup.train = train;
  setup.ldp = ldp;
  setup.perturb = perturb;
  setup.fed = fed;
  setup.seed = seed;
  return setup;
}

std::string ExperimentConfig::serialize() const {
  std::map<std::string, std::string> kv;
  kv["dataset.path"] = dataset_path;
  kv["dataset.format"] =
      dataset_format == InteractionFormat::delimited_text ? "tsv" : "jsonl";
  kv["dataset.synthetic"] = use_synthetic ? "true" : "false";
  kv["synthetic.users"] = std::to_string(synthetic.num_users);
  kv["synthetic.items"] = std::to_string(synthetic.num_items);
  kv["synthetic.rank"] = std::to_string(synthetic.latent_rank);
  kv["synthetic.edges_per_user"] = std::to_string(synthetic.interactions_per_user);
  kv["split.train"] = format_double(split.train);
  kv["split.validation"] = format_double(split.validation);
  kv["split.test"] = format_double(split.test);
  kv["model.k"] = std::to_string(embedding_dim);
  kv["model.layers"] = std::to_string(gnn.layers);
  kv["model.item_update_multiplier"] = std::to_string(gnn.item_update_multiplier);
  kv["model.activation"] =
      gnn.activation == Activation::sigmoid ? "sigmoid" : "identity";
  kv["model.weighting"] =
      gnn.weighting == NeighborWeighting::symmetric_sqrt ? "symmetric-sqrt" : "mean";
  kv["train.alpha"] = format_double(train.learning_rate);
  kv["train.gamma"] = format_double(train.l2_reg);
  kv["train.batch_size"] = std::to_string(train.batch_size);
  kv["train.local_epochs"] = std::to_string(train.local_epochs);
  kv["train.neg_samples"] = std::to_string(train.neg_samples_per_pos);
  kv["privacy.lambda"] = format_double(ldp.lambda);
  kv["perturb.p_pert"] = format_double(perturb.p_pert);
  kv["federation.nodes"] = std::to_string(fed.num_nodes);
  kv["federation.beta"] = format_double(fed.beta);
  kv["federation.mu"] = format_double(fed.mu);
  kv["federation.nu"] = format_double(fed.nu);
  kv["federation.rounds"] = std::to_string(fed.rounds);
  kv["federation.eval_interval"] = std::to_string(fed.eval_interval);
  kv["federation.participation"] = format_double(fed.participation);
  kv["federation.permanent_ban_after"] = std::to_string(fed.permanent_ban_after);
  kv["federation.parallel"] = fed.parallel ? "true" : "false";
  kv["eval.k"] = std::to_string(fed.eval_k);
  kv["run.seed"] = std::to_string(seed);
  kv["run.output_dir"] = output_dir;
  if (attack.has_value()) {
    kv["attack.enabled"] = "true";
    kv["attack.malicious_fraction"] = format_double(attack->malicious_fraction);
    kv["attack.kind"] = attack->attack_kind == AttackKind::gaussian_noise
                            ? "gaussian-noise"
                            : "gradient-poison";
    kv["attack.sigma"] =
        attack->sigma_attack.has_value() ? format_double(*attack->sigma_attack) : "auto";
    kv["attack.trials"] = std::to_string(attack->trials);
  }
  if (failure.has_value()) {
    kv["failure.failed_nodes"] = std::to_string(failure->failed_node_count);
    kv["failure.compromised_nodes"] = std::to_string(failure->compromised_node_count);
  }

  std::ostringstream out;
  for (const auto& [key, value] : kv) out << key << "=" << value << "\n";
  return out.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParseError("expected key=value", line_number);
    }
    config.set_key(line.substr(0, eq), line.substr(eq + 1));
  }
  return config;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

const std::map<std::string, std::string>& sweep_axes() {
  static const std::map<std::string, std::string> axes = {
      {"lambda", "privacy.lambda"},
      {"p_pert", "perturb.p_pert"},
      {"k", "model.k"},
      {"H", "model.layers"},
      {"h", "model.item_update_multiplier"},
      {"T", "federation.nodes"},
      {"beta", "federation.beta"},
      {"mu", "federation.mu"},
      {"nu", "federation.nu"},
      {"alpha", "train.alpha"},
      {"gamma", "train.gamma"},
      {"B", "train.batch_size"},
      {"E", "train.local_epochs"},
      {"Q", "federation.rounds"},
      {"K", "eval.k"},
  };
  return axes;
}

}  // namespace fastpfrec
