#pragma once

#include "tmtsc/data/pipeline.hpp"
#include "tmtsc/models/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>

namespace tmtsc {

nlohmann::json to_json(const ModelConfig& config);
/// Fields absent from j keep their value in base. Unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

struct Checkpoint {
  ModelConfig config;
  CategoryVocabulary vocabulary;
  std::optional<Task> task;
  ParameterSet params;
};

/// Writes manifest.json and params.bin into dir (created if needed). Both
/// files are written to temporaries and renamed into place.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
/// Throws missing_file, schema_mismatch (feature schema hash differs) or
/// validation (inconsistent manifest or truncated data).
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace tmtsc
