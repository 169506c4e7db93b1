#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

namespace tmtsc {

/// Panel length in months and number of features per step.
inline constexpr int kSteps = 24;
inline constexpr int kFeatures = 16;
/// Minimum number of observed months some feature needs for a sample to be kept.
inline constexpr int kMinObservedMonths = 6;
/// Value written into numeric cells that stay missing after imputation.
inline constexpr double kSentinel = -1.0;

enum class FeatureKind { numeric, categorical };
enum class FeatureCategory { funding, founder, team, investor, web, context };

struct FeatureDescriptor {
  std::string_view name;
  FeatureKind kind;
  FeatureCategory category;
  // Documented value range; NaN where none is given.
  double min;
  double max;
  bool log_transform;
};

/// The 16 features in panel column order. round_type is column 0.
const std::array<FeatureDescriptor, kFeatures>& feature_schema();

namespace feature {
inline constexpr int round_type = 0;
inline constexpr int total_funding = 1;
inline constexpr int valuation = 2;
inline constexpr int n_founder = 3;
inline constexpr int n_employee = 4;
inline constexpr int n_investor = 5;
inline constexpr int growth_investor_rate = 6;
inline constexpr int average_cagr = 7;
inline constexpr int two_x_cagr_rate = 8;
inline constexpr int cu_popularity = 9;
inline constexpr int sw_global_rank = 10;
inline constexpr int n_desktop_visitor = 11;
inline constexpr int n_mobile_visitor = 12;
inline constexpr int n_news = 13;
inline constexpr int n_regional_seed_round = 14;
inline constexpr int n_regional_series_ab = 15;
}  // namespace feature

std::optional<int> feature_index(std::string_view name);
std::string_view to_string(FeatureKind kind);
std::string_view to_string(FeatureCategory category);

/// FNV-1a over names, kinds and log flags, as 16 hex digits. Checkpoints
/// store it so that panels built under another schema are rejected.
std::string schema_hash();

}  // namespace tmtsc
