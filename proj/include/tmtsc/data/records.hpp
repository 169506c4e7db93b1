#pragma once

#include "tmtsc/data/schema.hpp"

#include <array>
#include <compare>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tmtsc {

struct YearMonth {
  int year = 1970;
  int month = 1;  // 1..12

  /// Months since year 0; consecutive months differ by 1.
  [[nodiscard]] int ordinal() const { return year * 12 + (month - 1); }
  static YearMonth from_ordinal(int ordinal) { return {ordinal / 12, ordinal % 12 + 1}; }
  auto operator<=>(const YearMonth&) const = default;
};

/// Parses "YYYY-MM"; throws parse error otherwise.
YearMonth parse_month(std::string_view text);
std::string format_month(YearMonth m);

struct Observation {
  YearMonth month;
  // Indexed by feature column. The round_type slot is unused.
  std::array<std::optional<double>, kFeatures> values{};
  std::optional<std::string> round_type;

  bool operator==(const Observation&) const = default;
};

struct RawCompanyRecord {
  std::string company_id;
  std::string investor_group_id;
  std::vector<Observation> observations;
  int label_vc = 0;
  int label_gc = 0;

  bool operator==(const RawCompanyRecord&) const = default;
};

/// Months strictly increasing, labels binary, numeric values finite and
/// non-negative. Throws validation error naming the offending field.
void validate_record(const RawCompanyRecord& record);

/// One JSON object per line. Parse errors carry the line number.
RawCompanyRecord parse_record(std::string_view line, std::size_t line_number = 0);
std::string format_record(const RawCompanyRecord& record);

std::vector<RawCompanyRecord> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const std::vector<RawCompanyRecord>& records);

}  // namespace tmtsc
