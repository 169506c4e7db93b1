#include "tmtsc/data/pipeline.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/numerics/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_map>

namespace tmtsc {

SplitFractions parse_split(std::string_view text) {
  double parts[3];
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t end = i < 2 ? text.find('/', pos) : text.size();
    if (end == std::string_view::npos) throw Error(ErrorKind::configuration, fmt::format("split '{}' is not a/b/c", text));
    const std::string_view field = text.substr(pos, end - pos);
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), parts[i]);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
      throw Error(ErrorKind::configuration, fmt::format("split '{}' has a non-numeric part", text));
    }
    pos = end + 1;
  }
  return {parts[0], parts[1], parts[2]};
}

std::vector<int> assign_groups(std::span<const std::string> group_ids, const SplitFractions& fractions,
                               std::uint64_t seed) {
  const double target_fraction[3] = {fractions.train, fractions.validation, fractions.test};
  double total = 0.0;
  for (double f : target_fraction) {
    if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorKind::configuration, "split fractions must lie in [0, 1]");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::configuration, fmt::format("split fractions sum to {}, not 1", total));
  }

  std::vector<std::string> groups;
  std::unordered_map<std::string, std::size_t> group_of;
  std::vector<std::size_t> sizes;
  for (const auto& g : group_ids) {
    const auto [it, fresh] = group_of.try_emplace(g, groups.size());
    if (fresh) {
      groups.push_back(g);
      sizes.push_back(0);
    }
    ++sizes[it->second];
  }

  int nonzero = 0;
  for (double f : target_fraction) nonzero += f > 0.0;
  if (groups.size() < static_cast<std::size_t>(nonzero)) {
    throw Error(ErrorKind::split_infeasible,
                fmt::format("{} investor groups cannot fill {} non-empty parts", groups.size(), nonzero));
  }

  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });

  const auto n = static_cast<double>(group_ids.size());
  double filled[3] = {0, 0, 0};
  int groups_in[3] = {0, 0, 0};
  std::vector<int> part_of_group(groups.size(), -1);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t remaining = order.size() - i;
    int empty_parts = 0;
    for (int p = 0; p < 3; ++p) empty_parts += target_fraction[p] > 0.0 && groups_in[p] == 0;
    const bool must_fill = remaining == static_cast<std::size_t>(empty_parts);
    int best = -1;
    double best_deficit = 0.0;
    for (int p = 0; p < 3; ++p) {
      if (target_fraction[p] <= 0.0) continue;
      if (must_fill && groups_in[p] > 0) continue;
      const double deficit = target_fraction[p] * n - filled[p];
      if (best < 0 || deficit > best_deficit) {
        best = p;
        best_deficit = deficit;
      }
    }
    const std::size_t g = order[i];
    part_of_group[g] = best;
    filled[best] += static_cast<double>(sizes[g]);
    ++groups_in[best];
  }

  std::vector<int> part(group_ids.size());
  for (std::size_t i = 0; i < group_ids.size(); ++i) part[i] = part_of_group[group_of.at(group_ids[i])];
  return part;
}

namespace {

template <typename Item>
BasicSplit<Item> split_items(std::span<const Item> items, const SplitFractions& fractions, std::uint64_t seed) {
  std::vector<std::string> groups;
  groups.reserve(items.size());
  for (const auto& item : items) groups.push_back(item.investor_group_id);
  const std::vector<int> part = assign_groups(groups, fractions, seed);
  BasicSplit<Item> split;
  split.seed = seed;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& dst = part[i] == 0 ? split.train : part[i] == 1 ? split.validation : split.test;
    dst.push_back(items[i]);
  }
  return split;
}

}  // namespace

DatasetSplit investor_centric_split(std::span<const CompanyPanel> panels, const SplitFractions& fractions,
                                    std::uint64_t seed) {
  return split_items(panels, fractions, seed);
}

BasicSplit<RawCompanyRecord> investor_centric_split(std::span<const RawCompanyRecord> records,
                                                    const SplitFractions& fractions, std::uint64_t seed) {
  return split_items(records, fractions, seed);
}

PreparedData prepare_dataset(std::span<const RawCompanyRecord> records, const SplitFractions& fractions,
                             std::uint64_t seed) {
  const std::vector<RawCompanyRecord> kept = filter_short_series(std::vector<RawCompanyRecord>(records.begin(), records.end()));
  const auto parts = investor_centric_split(std::span<const RawCompanyRecord>(kept), fractions, seed);
  PreparedData out;
  out.vocabulary = build_vocabulary(parts.train);
  out.split.seed = seed;
  for (const auto& r : parts.train) out.split.train.push_back(build_panel(r, out.vocabulary));
  for (const auto& r : parts.validation) out.split.validation.push_back(build_panel(r, out.vocabulary));
  for (const auto& r : parts.test) out.split.test.push_back(build_panel(r, out.vocabulary));
  return out;
}

}  // namespace tmtsc
