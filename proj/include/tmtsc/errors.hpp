#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tmtsc {

enum class ErrorKind {
  dimension,
  numeric_input,
  degenerate_batch,
  degenerate_sample,
  configuration,
  vocabulary,
  empty_record,
  domain,
  parse,
  validation,
  split_infeasible,
  undefined_metric,
  empty_batch,
  divergence,
  infeasible_size,
  io,
  missing_file,
  schema_mismatch,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a category so the CLI can map
// it to a distinct exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tmtsc
