#include "tmtsc/errors.hpp"

namespace tmtsc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::numeric_input: return "numeric_input";
    case ErrorKind::degenerate_batch: return "degenerate_batch";
    case ErrorKind::degenerate_sample: return "degenerate_sample";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::vocabulary: return "vocabulary";
    case ErrorKind::empty_record: return "empty_record";
    case ErrorKind::domain: return "domain";
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::split_infeasible: return "split_infeasible";
    case ErrorKind::undefined_metric: return "undefined_metric";
    case ErrorKind::empty_batch: return "empty_batch";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::infeasible_size: return "infeasible_size";
    case ErrorKind::io: return "io";
    case ErrorKind::missing_file: return "missing_file";
    case ErrorKind::schema_mismatch: return "schema_mismatch";
  }
  return "unknown";
}

}  // namespace tmtsc
