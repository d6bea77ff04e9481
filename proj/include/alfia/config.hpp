#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "alfia/clinical.hpp"
#include "alfia/model.hpp"
#include "alfia/training.hpp"

namespace alfia {

struct DataPaths {
  std::filesystem::path train;
  std::filesystem::path val;
  std::filesystem::path vocab;
};

// Everything a training run needs. Serialized as JSON; unknown keys are
// rejected and every section is validated before any work starts.
struct RunConfig {
  std::uint64_t seed = 42;
  DataPaths data;
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;

  // Copies the run seed into the model, trainer and splitter.
  void apply_seed(std::uint64_t s);
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Missing keys take defaults; relative data paths resolve against base_dir.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig read_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

const char* train_mode_name(TrainMode m);
TrainMode train_mode_from_name(const std::string& s);

// Checkpoint config snapshot: resolved run config plus the vocabulary.
std::string make_snapshot(const RunConfig& cfg, const Vocabulary& vocab);
struct Snapshot {
  RunConfig config;
  Vocabulary vocab;
};
Snapshot parse_snapshot(const std::string& text);

}  // namespace alfia
