#pragma once

#include "tmtsc/synthetic/generator.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string_view>

namespace tmtsc {

/// Reads the subset of TOML used by configuration files: comments, [table]
/// and [dotted.table] headers, and key = value pairs whose values are basic
/// strings, integers, floats, booleans or single-line arrays of those.
nlohmann::json parse_toml(std::string_view text, std::string_view source = "<toml>");

/// Loads a configuration file as JSON; files ending in .toml use the TOML
/// reader, anything else is parsed as JSON.
nlohmann::json load_config_file(const std::filesystem::path& path);

nlohmann::json to_json(const SynthConfig& config);
/// Overrides fields of base with the keys of j; unknown keys are an error.
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

}  // namespace tmtsc
