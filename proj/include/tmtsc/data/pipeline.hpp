#pragma once

#include "tmtsc/data/records.hpp"
#include "tmtsc/numerics/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tmtsc {

using Series = std::vector<std::optional<double>>;

/// One slot per calendar month from the first to the last observation.
struct MonthlyGrid {
  YearMonth first;
  std::array<Series, kFeatures> numeric;  // slot 0 unused
  std::vector<std::optional<std::string>> round_type;
  // Months in which the record had at least one value. Set at alignment and
  // carried through imputation.
  std::vector<bool> observed;

  [[nodiscard]] std::size_t months() const { return round_type.size(); }
  [[nodiscard]] int observed_months(int feature) const;
};

MonthlyGrid align_monthly(const RawCompanyRecord& record);

/// Missing months take the previous month's value, or 0 before the first one.
Series impute_total_funding(const Series& funding);
/// Missing valuation at t takes the (imputed) total funding at t.
Series impute_valuation(const Series& valuation, const Series& funding);
/// ln(1 + x) for x >= 0.
double log_scale(double x);

/// True if some feature has at least kMinObservedMonths observed months.
bool keep_series(const MonthlyGrid& grid);
std::vector<RawCompanyRecord> filter_short_series(const std::vector<RawCompanyRecord>& records);

/// Index 0 is UNKNOWN and 1 is MISSING; categories follow in sorted order so
/// the ids do not depend on record order.
struct CategoryVocabulary {
  static constexpr int unknown = 0;
  static constexpr int missing = 1;

  std::string feature = "round_type";
  std::vector<std::string> categories{"<UNKNOWN>", "<MISSING>"};

  [[nodiscard]] int size() const { return static_cast<int>(categories.size()); }
  bool operator==(const CategoryVocabulary&) const = default;
};

CategoryVocabulary build_vocabulary(std::span<const RawCompanyRecord> training_records);
int encode_categorical(const std::optional<std::string>& value, const CategoryVocabulary& vocab);

struct CompanyPanel {
  std::string company_id;
  std::string investor_group_id;
  Matrix X = Matrix::Constant(kSteps, kFeatures, kSentinel);  // round_type column holds vocabulary ids
  // 1 where the step carries at least one observed feature, 0 on padding
  // and on months where everything is missing.
  RowVector step_mask = RowVector::Zero(kSteps);
  int label_vc = 0;
  int label_gc = 0;

  bool operator==(const CompanyPanel&) const = default;
};

enum class Task { vc, gc };
Task parse_task(std::string_view text);
std::string_view to_string(Task task);
inline int label_of(const CompanyPanel& p, Task task) { return task == Task::vc ? p.label_vc : p.label_gc; }

/// Imputation and log scaling of a grid. Values that stay missing remain empty.
MonthlyGrid transform_grid(const MonthlyGrid& grid);

/// Writes the transformed grid into a T x K panel: missing numeric cells get
/// the sentinel, missing categories the MISSING id; the most recent T months
/// are kept and shorter histories are padded at the old end.
CompanyPanel fill_sentinel_and_pad(const MonthlyGrid& transformed, const CategoryVocabulary& vocab);

/// align -> impute -> log -> sentinel/pad for one record.
CompanyPanel build_panel(const RawCompanyRecord& record, const CategoryVocabulary& vocab);

struct SplitFractions {
  double train = 0.73;
  double validation = 0.13;
  double test = 0.14;
};
SplitFractions parse_split(std::string_view text);

template <typename Item>
struct BasicSplit {
  std::vector<Item> train;
  std::vector<Item> validation;
  std::vector<Item> test;
  std::uint64_t seed = 0;
};
using DatasetSplit = BasicSplit<CompanyPanel>;

/// Part index (0 train, 1 validation, 2 test) for every item, keeping each
/// group whole. Groups are shuffled with the seed, then placed largest first
/// into the part furthest below its target count.
std::vector<int> assign_groups(std::span<const std::string> group_ids, const SplitFractions& fractions,
                               std::uint64_t seed);

DatasetSplit investor_centric_split(std::span<const CompanyPanel> panels, const SplitFractions& fractions,
                                    std::uint64_t seed);
BasicSplit<RawCompanyRecord> investor_centric_split(std::span<const RawCompanyRecord> records,
                                                    const SplitFractions& fractions, std::uint64_t seed);

struct PreparedData {
  DatasetSplit split;
  CategoryVocabulary vocabulary;  // built from the training part only
};

/// filter -> investor-centric split of the records -> vocabulary from the
/// training part -> panels for every part.
PreparedData prepare_dataset(std::span<const RawCompanyRecord> records, const SplitFractions& fractions,
                             std::uint64_t seed);

std::string format_panel(const CompanyPanel& panel);
CompanyPanel parse_panel(std::string_view line, std::size_t line_number = 0);
void save_panels(const std::filesystem::path& path, std::span<const CompanyPanel> panels);
std::vector<CompanyPanel> load_panels(const std::filesystem::path& path);

/// Mini-batch in the (B*T) x K activation layout.
struct Batch {
  Matrix X;          // (B*T) x K, row b*T + t
  Matrix step_mask;  // B x T
  std::vector<int> labels;

  [[nodiscard]] Index size() const { return step_mask.rows(); }
};

Batch make_batch(std::span<const CompanyPanel> panels, std::span<const std::size_t> indices, Task task);
Batch make_batch(std::span<const CompanyPanel> panels, Task task);

}  // namespace tmtsc
