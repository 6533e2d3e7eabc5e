#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "dbm/model.hpp"

namespace dbm {

/// Model parameters plus what produced them. Doubles round-trip bit-exactly.
struct Checkpoint {
  ModelParams model;
  std::vector<long> train_counts;
  nlohmann::json config;  // experiment config echoed verbatim
};

nlohmann::json model_to_json(const ModelParams& model);
ModelParams model_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dbm
