#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tmtsc {

struct SeedMetrics {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::optional<double> precision;  // empty when nothing is predicted positive
  double auc_roc = 0.0;
};

/// Mean and sample standard deviation (0 for a single value).
struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

Summary summarize(std::span<const double> values);

struct MetricsReport {
  std::string model;
  std::string task;
  double threshold = 0.5;
  std::size_t n_test = 0;
  std::size_t n_positive = 0;
  std::vector<SeedMetrics> per_seed;
  Summary accuracy;
  // Over the seeds where precision is defined; empty if it never is.
  std::optional<Summary> precision;
  Summary auc_roc;
};

nlohmann::json to_json(const MetricsReport& report);
void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report);

/// Produces class-1 test scores for one seed, typically by training a fresh
/// model with that seed.
using SeededScorer = std::function<std::vector<double>(std::uint64_t seed)>;

/// Runs the scorer for seeds first_seed, first_seed + 1, ... and aggregates
/// accuracy, precision and AUC-ROC against the fixed test labels.
MetricsReport evaluate_runs(const SeededScorer& scorer, std::span<const int> test_labels, int n_seeds,
                            std::uint64_t first_seed = 0, double threshold = 0.5);

}  // namespace tmtsc
