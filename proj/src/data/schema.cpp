#include "tmtsc/data/schema.hpp"

#include <fmt/format.h>

namespace tmtsc {
namespace {

constexpr double kNone = std::numeric_limits<double>::quiet_NaN();

using K = FeatureKind;
using C = FeatureCategory;

const std::array<FeatureDescriptor, kFeatures> kSchema{{
    {"round_type", K::categorical, C::funding, kNone, kNone, false},
    {"total_funding", K::numeric, C::funding, 1.0, 2e11, true},
    {"valuation", K::numeric, C::funding, 1.0, 1e12, true},
    {"n_founder", K::numeric, C::founder, 0.0, 38.0, true},
    {"n_employee", K::numeric, C::team, 1.0, 113757.0, false},
    {"n_investor", K::numeric, C::investor, 1.0, 240.0, true},
    {"growth_investor_rate", K::numeric, C::investor, 0.0, 1.0, true},
    {"average_cagr", K::numeric, C::investor, kNone, kNone, true},
    {"2x_cagr_rate", K::numeric, C::investor, 0.0, 1.0, true},
    {"cu_popularity", K::numeric, C::web, kNone, kNone, false},
    {"sw_global_rank", K::numeric, C::web, kNone, kNone, true},
    {"n_desktop_visitor", K::numeric, C::web, kNone, kNone, true},
    {"n_mobile_visitor", K::numeric, C::web, kNone, kNone, true},
    {"n_news", K::numeric, C::web, 1.0, 389.0, true},
    {"n_regional_seed_round", K::numeric, C::context, kNone, kNone, true},
    {"n_regional_series_ab", K::numeric, C::context, kNone, kNone, true},
}};

}  // namespace

const std::array<FeatureDescriptor, kFeatures>& feature_schema() { return kSchema; }

std::optional<int> feature_index(std::string_view name) {
  for (int i = 0; i < kFeatures; ++i) {
    if (kSchema[i].name == name) return i;
  }
  return std::nullopt;
}

std::string_view to_string(FeatureKind kind) { return kind == FeatureKind::numeric ? "numeric" : "categorical"; }

std::string_view to_string(FeatureCategory category) {
  switch (category) {
    case C::funding: return "funding";
    case C::founder: return "founder";
    case C::team: return "team";
    case C::investor: return "investor";
    case C::web: return "web";
    case C::context: return "context";
  }
  return "unknown";
}

std::string schema_hash() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  mix(fmt::format("T={};K={}", kSteps, kFeatures));
  for (const auto& f : kSchema) {
    mix(f.name);
    mix(to_string(f.kind));
    mix(f.log_transform ? "log" : "raw");
  }
  return fmt::format("{:016x}", h);
}

}  // namespace tmtsc
