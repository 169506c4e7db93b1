#include "tmtsc/numerics/types.hpp"

#include "tmtsc/errors.hpp"

namespace tmtsc {

void validate_shape(const std::vector<Index>& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw Error(ErrorKind::dimension, "tensors must have rank 1 or 2");
  }
  for (Index d : shape) {
    if (d <= 0) throw Error(ErrorKind::dimension, "tensor dimensions must be positive");
  }
}

void throw_duplicate_parameter(const std::string& name) {
  throw Error(ErrorKind::configuration, "duplicate parameter name '" + name + "'");
}

void throw_unknown_parameter(std::string_view name) {
  throw Error(ErrorKind::configuration, "unknown parameter '" + std::string(name) + "'");
}

std::size_t count_params(const ParameterSet& params) { return count_params(params, ""); }

std::size_t count_params(const ParameterSet& params, std::string_view prefix) {
  std::size_t n = 0;
  for (const auto& p : params) {
    if (p.trainable && std::string_view(p.name).substr(0, prefix.size()) == prefix) {
      n += static_cast<std::size_t>(p.numel());
    }
  }
  return n;
}

}  // namespace tmtsc
