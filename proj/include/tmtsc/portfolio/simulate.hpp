#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tmtsc {

/// A labeled constant drawn next to the simulated curves. It is never a
/// computed result.
struct ReferenceLine {
  std::string label;
  std::optional<int> portfolio_size;  // empty for a horizontal line
  double success_rate = 0.0;
  bool operator==(const ReferenceLine&) const = default;
};

/// Real-world growth-capital success rate, drawn as a horizontal line.
ReferenceLine growth_capital_reference();

struct SimConfig {
  std::vector<int> portfolio_sizes{10, 25, 50, 100};
  int n_repeats = 100;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  std::vector<ReferenceLine> references;

  void validate() const;
};

/// Scores of one model on the candidate pool; every model scores the same
/// companies in the same order.
struct PoolScores {
  std::string model;
  std::vector<double> scores;
};

/// Entries of scores whose label is 1, in order.
std::vector<double> positive_pool(std::span<const double> scores, std::span<const int> labels);

struct SimCell {
  std::string model;
  int portfolio_size = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over repeats
  std::vector<double> rates;
};

struct SimResult {
  std::vector<SimCell> cells;  // model-major, sizes in configured order
  std::vector<ReferenceLine> references;
};

/// For each size i and repeat r, draws i pool companies without replacement
/// and records the fraction a model scores at or above the threshold. With
/// paired draws every model sees the same companies in a repeat; otherwise
/// each model draws independently.
SimResult simulate(std::span<const PoolScores> models, const SimConfig& config, bool paired = true);

/// Header model,portfolio_size,mean,std with one row per cell.
void export_sim_csv(const SimResult& result, const std::filesystem::path& path);
/// Cells of a CSV written by export_sim_csv, without raw rates.
std::vector<SimCell> read_sim_csv(const std::filesystem::path& path);

nlohmann::json to_json(const SimResult& result);

}  // namespace tmtsc
