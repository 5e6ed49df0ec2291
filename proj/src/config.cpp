#include "egfn/config.hpp"

#include <fstream>
#include <sstream>

#include "egfn/errors.hpp"

namespace egfn {

using nlohmann::json;

namespace {

json grid_env_defaults() {
  return {{"type", "hypergrid"}, {"D", 2}, {"H", 8}, {"r0", 1e-3}, {"r1", 0.5}, {"r2", 2.0}};
}

json seq_env_defaults() {
  return {{"type", "sequence"}, {"alphabet", "ACGT"}, {"L", 8},
          {"table_path", ""},   {"beta", 3.0},        {"mode_tol", 0.0}};
}

// Keys of `user` must exist in `defaults`, recursively through objects.
void check_keys(const json& user, const json& defaults, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("'" + prefix + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const json& d = defaults.at(it.key());
    if (d.is_object()) check_keys(it.value(), d, key);
  }
}

void merge_into(json& base, const json& user) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      merge_into(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

const json& at_path(const json& doc, const std::string& path) {
  const json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) node = &node->at(part);
  return *node;
}

std::size_t get_size(const json& doc, const std::string& path) {
  const json& v = at_path(doc, path);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError("'" + path + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

double get_double(const json& doc, const std::string& path) {
  const json& v = at_path(doc, path);
  if (!v.is_number()) throw ConfigError("'" + path + "' must be a number");
  return v.get<double>();
}

bool get_bool(const json& doc, const std::string& path) {
  const json& v = at_path(doc, path);
  if (!v.is_boolean()) throw ConfigError("'" + path + "' must be true or false");
  return v.get<bool>();
}

std::string get_string(const json& doc, const std::string& path) {
  const json& v = at_path(doc, path);
  if (!v.is_string()) throw ConfigError("'" + path + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::size_t> get_size_list(const json& doc, const std::string& path) {
  const json& v = at_path(doc, path);
  if (!v.is_array()) throw ConfigError("'" + path + "' must be a list of nonnegative integers");
  std::vector<std::size_t> out;
  for (const json& e : v) {
    if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<long long>() >= 0)) {
      throw ConfigError("'" + path + "' must be a list of nonnegative integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

std::string selection_name(SelectionKind k) {
  return k == SelectionKind::kRoulette ? "roulette" : "tournament";
}

}  // namespace

json default_config_json(const std::string& env_type) {
  json env;
  if (env_type == "hypergrid") {
    env = grid_env_defaults();
  } else if (env_type == "sequence") {
    env = seq_env_defaults();
  } else {
    throw ConfigError("'env.type' must be \"hypergrid\" or \"sequence\", got \"" + env_type + "\"");
  }
  const TrainConfig t;
  const EvoConfig e;
  const ReplayConfig r;
  const OutputConfig o;
  return {
      {"seed", 0},
      {"objective", "TB"},
      {"env", env},
      {"train",
       {{"total_steps", t.total_steps},
        {"batch_size", t.batch_size},
        {"online_ratio", t.online_ratio},
        {"lr", nullptr},
        {"z_lr", t.z_lr},
        {"explore_eps", t.explore_eps},
        {"steps_per_batch", t.steps_per_batch},
        {"hidden_dims", t.hidden_dims},
        {"uniform_pb", t.uniform_pb},
        {"metrics_window", t.metrics_window},
        {"topk", t.topk},
        {"hist_checkpoints", t.hist_checkpoints},
        {"oracle_cap", t.oracle_cap},
        {"exact_l1", t.exact_l1}}},
      {"evo",
       {{"disabled", false},
        {"k", e.k},
        {"eval_episodes", e.eval_episodes},
        {"elite_frac", e.elite_frac},
        {"mutation_strength", e.mutation_strength},
        {"p_mutation", e.p_mutation},
        {"row_mut_frac", e.row_mut_frac},
        {"sync_period", e.sync_period},
        {"selection", selection_name(e.selection)},
        {"tournament_size", e.tournament_size}}},
      {"replay",
       {{"capacity", r.capacity},
        {"priority_percentile", r.priority_percentile},
        {"priority_split", r.priority_split}}},
      {"output",
       {{"dir", o.dir},
        {"cadence", t.cadence},
        {"record_wall_time", t.record_wall_time},
        {"buffer_snapshot", o.buffer_snapshot},
        {"final_params", o.final_params}}},
  };
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override key '" + path + "' has an empty component");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& child = (*node)[parts[i]];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) throw ConfigError("override key '" + path + "' passes through a non-object");
    node = &child;
  }
  (*node)[parts.back()] = value;
}

RunConfig resolve_config(const json& user, const std::filesystem::path& base_dir) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  std::string env_type = "hypergrid";
  if (user.contains("env") && user["env"].is_object() && user["env"].contains("type")) {
    if (!user["env"]["type"].is_string()) throw ConfigError("'env.type' must be a string");
    env_type = user["env"]["type"].get<std::string>();
  }
  json doc = default_config_json(env_type);
  check_keys(user, doc, "");
  merge_into(doc, user);

  RunConfig cfg;
  EnvSpec& env = cfg.env;
  env.type = env_type;
  env.base_dir = base_dir;
  if (env_type == "hypergrid") {
    env.grid.dims = get_size(doc, "env.D");
    env.grid.horizon = get_size(doc, "env.H");
    env.grid.r0 = get_double(doc, "env.r0");
    env.grid.r1 = get_double(doc, "env.r1");
    env.grid.r2 = get_double(doc, "env.r2");
    if (env.grid.dims < 1) throw ConfigError("'env.D' must be at least 1");
    if (env.grid.horizon < 2) throw ConfigError("'env.H' must be at least 2");
    if (env.grid.r0 < 0 || env.grid.r1 < 0 || env.grid.r2 < 0) {
      throw ConfigError("'env.r0', 'env.r1' and 'env.r2' must be nonnegative");
    }
  } else {
    env.seq.alphabet = get_string(doc, "env.alphabet");
    env.seq.length = get_size(doc, "env.L");
    env.seq.beta = get_double(doc, "env.beta");
    env.seq.mode_tol = get_double(doc, "env.mode_tol");
    env.table_path = get_string(doc, "env.table_path");
    if (env.table_path.empty()) throw ConfigError("'env.table_path' is required for the sequence environment");
    if (env.seq.alphabet.empty()) throw ConfigError("'env.alphabet' must not be empty");
    if (env.seq.length < 1) throw ConfigError("'env.L' must be at least 1");
    if (env.seq.beta < 0) throw ConfigError("'env.beta' must be nonnegative");
    if (env.seq.mode_tol < 0 || env.seq.mode_tol >= 1) throw ConfigError("'env.mode_tol' must lie in [0, 1)");
  }

  TrainConfig& t = cfg.train;
  const json& seed = doc.at("seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
    throw ConfigError("'seed' must be a nonnegative integer");
  }
  t.seed = seed.get<std::uint64_t>();
  try {
    t.objective = parse_objective(get_string(doc, "objective"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("'objective': ") + e.what());
  }
  t.total_steps = get_size(doc, "train.total_steps");
  t.batch_size = get_size(doc, "train.batch_size");
  t.online_ratio = get_double(doc, "train.online_ratio");
  const json& lr = doc.at("train").at("lr");
  if (!lr.is_null()) {
    if (!lr.is_number()) throw ConfigError("'train.lr' must be a number or null");
    t.lr = lr.get<double>();
  }
  t.z_lr = get_double(doc, "train.z_lr");
  t.explore_eps = get_double(doc, "train.explore_eps");
  t.steps_per_batch = get_size(doc, "train.steps_per_batch");
  t.hidden_dims = get_size_list(doc, "train.hidden_dims");
  t.uniform_pb = get_bool(doc, "train.uniform_pb");
  t.metrics_window = get_size(doc, "train.metrics_window");
  t.topk = get_size(doc, "train.topk");
  t.hist_checkpoints = get_size_list(doc, "train.hist_checkpoints");
  t.oracle_cap = get_size(doc, "train.oracle_cap");
  t.exact_l1 = get_bool(doc, "train.exact_l1");

  t.evo_enabled = !get_bool(doc, "evo.disabled");
  t.evo.k = get_size(doc, "evo.k");
  t.evo.eval_episodes = get_size(doc, "evo.eval_episodes");
  t.evo.elite_frac = get_double(doc, "evo.elite_frac");
  t.evo.mutation_strength = get_double(doc, "evo.mutation_strength");
  t.evo.p_mutation = get_double(doc, "evo.p_mutation");
  t.evo.row_mut_frac = get_double(doc, "evo.row_mut_frac");
  t.evo.sync_period = get_size(doc, "evo.sync_period");
  const std::string sel = get_string(doc, "evo.selection");
  if (sel == "roulette") {
    t.evo.selection = SelectionKind::kRoulette;
  } else if (sel == "tournament") {
    t.evo.selection = SelectionKind::kTournament;
  } else {
    throw ConfigError("'evo.selection' must be \"roulette\" or \"tournament\"");
  }
  t.evo.tournament_size = get_size(doc, "evo.tournament_size");

  t.replay.capacity = get_size(doc, "replay.capacity");
  t.replay.priority_percentile = get_double(doc, "replay.priority_percentile");
  t.replay.priority_split = get_double(doc, "replay.priority_split");

  cfg.output.dir = get_string(doc, "output.dir");
  t.cadence = get_size(doc, "output.cadence");
  t.record_wall_time = get_bool(doc, "output.record_wall_time");
  cfg.output.buffer_snapshot = get_bool(doc, "output.buffer_snapshot");
  cfg.output.final_params = get_bool(doc, "output.final_params");

  t.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config file '" + path.string() + "' is not valid JSON");
  for (const std::string& o : overrides) apply_override(doc, o);
  return resolve_config(doc, path.parent_path());
}

json to_json(const RunConfig& cfg) {
  json doc = default_config_json(cfg.env.type);
  json& env = doc["env"];
  if (cfg.env.type == "hypergrid") {
    env["D"] = cfg.env.grid.dims;
    env["H"] = cfg.env.grid.horizon;
    env["r0"] = cfg.env.grid.r0;
    env["r1"] = cfg.env.grid.r1;
    env["r2"] = cfg.env.grid.r2;
  } else {
    env["alphabet"] = cfg.env.seq.alphabet;
    env["L"] = cfg.env.seq.length;
    env["table_path"] = cfg.env.table_path;
    env["beta"] = cfg.env.seq.beta;
    env["mode_tol"] = cfg.env.seq.mode_tol;
  }
  const TrainConfig& t = cfg.train;
  doc["seed"] = t.seed;
  doc["objective"] = to_string(t.objective);
  json& tr = doc["train"];
  tr["total_steps"] = t.total_steps;
  tr["batch_size"] = t.batch_size;
  tr["online_ratio"] = t.online_ratio;
  tr["lr"] = t.effective_lr();
  tr["z_lr"] = t.z_lr;
  tr["explore_eps"] = t.explore_eps;
  tr["steps_per_batch"] = t.steps_per_batch;
  tr["hidden_dims"] = t.hidden_dims;
  tr["uniform_pb"] = t.uniform_pb;
  tr["metrics_window"] = t.metrics_window;
  tr["topk"] = t.topk;
  tr["hist_checkpoints"] = t.hist_checkpoints;
  tr["oracle_cap"] = t.oracle_cap;
  tr["exact_l1"] = t.exact_l1;
  json& evo = doc["evo"];
  evo["disabled"] = !t.evo_enabled;
  evo["k"] = t.evo.k;
  evo["eval_episodes"] = t.evo.eval_episodes;
  evo["elite_frac"] = t.evo.elite_frac;
  evo["mutation_strength"] = t.evo.mutation_strength;
  evo["p_mutation"] = t.evo.p_mutation;
  evo["row_mut_frac"] = t.evo.row_mut_frac;
  evo["sync_period"] = t.evo.sync_period;
  evo["selection"] = selection_name(t.evo.selection);
  evo["tournament_size"] = t.evo.tournament_size;
  json& rp = doc["replay"];
  rp["capacity"] = t.replay.capacity;
  rp["priority_percentile"] = t.replay.priority_percentile;
  rp["priority_split"] = t.replay.priority_split;
  json& out = doc["output"];
  out["dir"] = cfg.output.dir;
  out["cadence"] = t.cadence;
  out["record_wall_time"] = t.record_wall_time;
  out["buffer_snapshot"] = cfg.output.buffer_snapshot;
  out["final_params"] = cfg.output.final_params;
  return doc;
}

std::unique_ptr<Environment> make_environment(const EnvSpec& spec) {
  if (spec.type == "hypergrid") return std::make_unique<HypergridEnv>(spec.grid);
  if (spec.type == "sequence") {
    std::filesystem::path p(spec.table_path);
    if (p.is_relative() && !spec.base_dir.empty()) p = spec.base_dir / p;
    return std::make_unique<SeqEnv>(spec.seq, load_reward_table(p));
  }
  throw ConfigError("unknown environment type '" + spec.type + "'");
}

}  // namespace egfn
