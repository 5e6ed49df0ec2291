#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "egfn/envs.hpp"
#include "egfn/trainer.hpp"

namespace egfn {

struct EnvSpec {
  std::string type = "hypergrid";  // or "sequence"
  HypergridParams grid;
  SeqParams seq;
  std::string table_path;  // sequence only; relative paths resolve against base_dir
  std::filesystem::path base_dir;
};

struct OutputConfig {
  std::string dir = "runs/default";
  bool buffer_snapshot = true;
  bool final_params = true;
};

struct RunConfig {
  EnvSpec env;
  TrainConfig train;
  OutputConfig output;
};

// The full default document for an environment type. Every accepted key
// appears here; anything else is rejected.
nlohmann::json default_config_json(const std::string& env_type = "hypergrid");

// Applies `key.path=value` to `doc`. The value is read as JSON when it parses
// and as a plain string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Merges `user` over the defaults, rejecting unknown keys and wrong types,
// and converts the result. Throws ConfigError naming the offending key.
RunConfig resolve_config(const nlohmann::json& user, const std::filesystem::path& base_dir = {});

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Fully resolved document, every default explicit (the learning rate is
// written as its effective value).
nlohmann::json to_json(const RunConfig& cfg);

std::unique_ptr<Environment> make_environment(const EnvSpec& spec);

}  // namespace egfn
