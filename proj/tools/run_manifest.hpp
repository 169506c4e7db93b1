#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace tmtsc::cli {

/// Record of one command invocation, written after every other output.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::filesystem::path& path) { inputs_.push_back(path.string()); }
  void add_output(const std::filesystem::path& path) { outputs_.push_back(path.string()); }
  /// Seconds since construction, stored under the given name.
  void mark(const std::string& phase);
  void note(const std::string& key, nlohmann::json value) { notes_[key] = std::move(value); }

  /// Fails if a listed output is missing, then writes atomically.
  void write(const std::filesystem::path& path);

 private:
  std::string command_;
  std::vector<std::string> argv_;
  nlohmann::json config_ = nlohmann::json::object();
  std::uint64_t seed_ = 0;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  nlohmann::json timings_ = nlohmann::json::object();
  nlohmann::json notes_ = nlohmann::json::object();
  std::string started_at_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace tmtsc::cli
