#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cuelab/diagnostics.hpp"
#include "cuelab/factorspace.hpp"
#include "cuelab/nn.hpp"

namespace cuelab {

// A fully validated experiment: one config file determines the whole run.
// Unknown keys anywhere in the config are rejected.
struct Experiment {
  nlohmann::json config;  // effective config (after seed override)
  FactorSpace space;
  CueSet cues;
  nn::ModelConfig model_cfg;
  uint64_t master_seed = 0;
  int jobs = 0;
  std::string config_hash;

  EvalOptions eval_options() const;
  double epsilon() const;
  std::vector<uint64_t> seeds() const;
  nn::OptConfig optimizer() const;
};

void validate_config(const nlohmann::json& config);

Experiment load_experiment(const nlohmann::json& config, std::optional<uint64_t> seed_override,
                           int jobs);

// Dispatches one CLI command. `args` carries per-invocation inputs (checkpoint
// paths); results are written under out_dir and summarized in the returned
// JSON. Valid commands: gen-manifest, train, eval, landscape, curvature,
// basin, connect, kcc.
nlohmann::json run_command(const Experiment& exp, const std::string& command,
                           const nlohmann::json& args, const std::filesystem::path& out_dir);

}  // namespace cuelab
