#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "cuelab/nn.hpp"

namespace cuelab {

// On-disk model format: versioned magic string, JSON header (model config +
// training metadata), then the flat parameter vector as little-endian float32.
struct Checkpoint {
  nn::ModelConfig config;
  nlohmann::json meta;
  std::vector<float> params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
nn::Model model_from_checkpoint(const Checkpoint& ckpt);

nlohmann::json model_config_to_json(const nn::ModelConfig& cfg);
nn::ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace cuelab
