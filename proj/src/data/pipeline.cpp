#include "tmtsc/data/pipeline.hpp"

#include "tmtsc/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace tmtsc {

int MonthlyGrid::observed_months(int f) const {
  if (f == feature::round_type) {
    return static_cast<int>(std::count_if(round_type.begin(), round_type.end(), [](const auto& v) { return v.has_value(); }));
  }
  const Series& s = numeric[f];
  return static_cast<int>(std::count_if(s.begin(), s.end(), [](const auto& v) { return v.has_value(); }));
}

MonthlyGrid align_monthly(const RawCompanyRecord& record) {
  const auto& obs = record.observations;
  if (obs.empty()) throw Error(ErrorKind::empty_record, record.company_id + ": no observations");
  for (std::size_t i = 1; i < obs.size(); ++i) {
    if (!(obs[i - 1].month < obs[i].month)) {
      throw Error(ErrorKind::validation, fmt::format("{}: months not strictly increasing at {}", record.company_id,
                                                     format_month(obs[i].month)));
    }
  }
  MonthlyGrid grid;
  grid.first = obs.front().month;
  const auto n = static_cast<std::size_t>(obs.back().month.ordinal() - grid.first.ordinal() + 1);
  for (int k = 1; k < kFeatures; ++k) grid.numeric[k].assign(n, std::nullopt);
  grid.round_type.assign(n, std::nullopt);
  grid.observed.assign(n, false);
  for (const Observation& o : obs) {
    const auto slot = static_cast<std::size_t>(o.month.ordinal() - grid.first.ordinal());
    bool any = o.round_type.has_value();
    grid.round_type[slot] = o.round_type;
    for (int k = 1; k < kFeatures; ++k) {
      grid.numeric[k][slot] = o.values[k];
      any = any || o.values[k].has_value();
    }
    grid.observed[slot] = any;
  }
  return grid;
}

Series impute_total_funding(const Series& funding) {
  Series out(funding.size());
  double previous = 0.0;
  for (std::size_t t = 0; t < funding.size(); ++t) {
    if (funding[t]) previous = *funding[t];
    out[t] = previous;
  }
  return out;
}

Series impute_valuation(const Series& valuation, const Series& funding) {
  Series out = valuation;
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (!out[t] && t < funding.size()) out[t] = funding[t];
  }
  return out;
}

double log_scale(double x) {
  if (!(x >= 0.0)) throw Error(ErrorKind::domain, fmt::format("log_scale: negative input {}", x));
  return std::log1p(x);
}

bool keep_series(const MonthlyGrid& grid) {
  for (int k = 0; k < kFeatures; ++k) {
    if (grid.observed_months(k) >= kMinObservedMonths) return true;
  }
  return false;
}

std::vector<RawCompanyRecord> filter_short_series(const std::vector<RawCompanyRecord>& records) {
  std::vector<RawCompanyRecord> kept;
  for (const auto& r : records) {
    if (r.observations.empty()) continue;
    if (keep_series(align_monthly(r))) kept.push_back(r);
  }
  return kept;
}

CategoryVocabulary build_vocabulary(std::span<const RawCompanyRecord> training_records) {
  std::set<std::string> seen;
  for (const auto& r : training_records) {
    for (const auto& o : r.observations) {
      if (o.round_type) seen.insert(*o.round_type);
    }
  }
  CategoryVocabulary vocab;
  vocab.categories.insert(vocab.categories.end(), seen.begin(), seen.end());
  return vocab;
}

int encode_categorical(const std::optional<std::string>& value, const CategoryVocabulary& vocab) {
  if (!value) return CategoryVocabulary::missing;
  const auto begin = vocab.categories.begin() + 2;
  const auto it = std::lower_bound(begin, vocab.categories.end(), *value);
  if (it == vocab.categories.end() || *it != *value) return CategoryVocabulary::unknown;
  return static_cast<int>(it - vocab.categories.begin());
}

Task parse_task(std::string_view text) {
  if (text == "vc") return Task::vc;
  if (text == "gc") return Task::gc;
  throw Error(ErrorKind::configuration, fmt::format("task must be vc or gc, got '{}'", text));
}

std::string_view to_string(Task task) { return task == Task::vc ? "vc" : "gc"; }

MonthlyGrid transform_grid(const MonthlyGrid& grid) {
  MonthlyGrid out = grid;
  auto& funding = out.numeric[feature::total_funding];
  funding = impute_total_funding(funding);
  out.numeric[feature::valuation] = impute_valuation(out.numeric[feature::valuation], funding);
  const auto& schema = feature_schema();
  for (int k = 1; k < kFeatures; ++k) {
    if (!schema[k].log_transform) continue;
    for (auto& v : out.numeric[k]) {
      if (v) v = log_scale(*v);
    }
  }
  return out;
}

CompanyPanel fill_sentinel_and_pad(const MonthlyGrid& g, const CategoryVocabulary& vocab) {
  CompanyPanel p;
  p.X.col(feature::round_type).setConstant(CategoryVocabulary::missing);
  const auto n = static_cast<std::ptrdiff_t>(g.months());
  const std::ptrdiff_t kept = std::min<std::ptrdiff_t>(n, kSteps);
  // Source month n - kept + i lands on row kSteps - kept + i.
  for (std::ptrdiff_t i = 0; i < kept; ++i) {
    const auto src = static_cast<std::size_t>(n - kept + i);
    const Index row = kSteps - kept + i;
    p.X(row, feature::round_type) = encode_categorical(g.round_type[src], vocab);
    for (int k = 1; k < kFeatures; ++k) {
      const auto& v = g.numeric[k][src];
      p.X(row, k) = v ? *v : kSentinel;
    }
    p.step_mask(row) = g.observed[src] ? 1.0 : 0.0;
  }
  return p;
}

CompanyPanel build_panel(const RawCompanyRecord& record, const CategoryVocabulary& vocab) {
  CompanyPanel p = fill_sentinel_and_pad(transform_grid(align_monthly(record)), vocab);
  p.company_id = record.company_id;
  p.investor_group_id = record.investor_group_id;
  p.label_vc = record.label_vc;
  p.label_gc = record.label_gc;
  return p;
}

}  // namespace tmtsc
