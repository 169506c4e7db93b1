#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tmtsc {

struct AccuracyPrecision {
  double accuracy = 0.0;
  // Empty when nothing is predicted positive.
  std::optional<double> precision;
};

/// Predicts 1 iff score >= threshold.
AccuracyPrecision accuracy_precision(std::span<const double> scores, std::span<const int> labels,
                                     double threshold = 0.5);

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from average ranks.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;  // +inf for the (0, 0) endpoint
};

/// (0, 0), one point per distinct score from high to low, then (1, 1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
double trapezoid_area(std::span<const RocPoint> curve);

void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> curve);

}  // namespace tmtsc
