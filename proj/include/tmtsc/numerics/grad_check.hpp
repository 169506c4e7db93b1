#pragma once

#include "tmtsc/numerics/quad.hpp"
#include "tmtsc/numerics/tape.hpp"
#include "tmtsc/numerics/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace tmtsc {

struct GradCheckOptions {
  double step = 1e-6;
  int coordinates_per_parameter = 20;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
};

struct ParameterGradCheck {
  std::string name;
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped = 0;
  int refined = 0;  // coordinates re-differenced in quad precision
  // Coordinate with the largest relative error.
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParameterGradCheck> parameters;
  double max_rel_error = 0.0;
  int skipped = 0;
  bool passed = true;
};

/// Builds a scalar loss on the tape from the given parameter values.
template <typename Scalar>
using LossFunction = std::function<BasicVar<Scalar>(BasicTape<Scalar>&, BasicParameterSet<Scalar>&)>;

/// |a - n| / max(|a|, |n|, 1e-12)
double relative_error(double analytic, double numeric);

/// Compares the double-precision reverse-mode gradient of `analytic` with
/// central finite differences of `reference` on a sample of coordinates of
/// every trainable parameter. The differences are taken in extended
/// precision so that round-off in the loss stays far below the step. A
/// coordinate that misses the tolerance is differenced again with `exact`
/// in quad precision, whose result then stands: for gradients near 1e-8 the
/// extended-precision round-off alone is of the order of the tolerance.
/// Coordinates whose perturbation flips a rectifier are reported as skipped.
GradCheckReport grad_check(const LossFunction<double>& analytic, const LossFunction<long double>& reference,
                           const LossFunction<Quad>& exact, ParameterSet& params, const GradCheckOptions& options = {});

/// Same, for a loss written once as a generic callable (auto& tape, auto& params).
template <typename F>
GradCheckReport grad_check(F&& loss, ParameterSet& params, const GradCheckOptions& options = {}) {
  return grad_check(LossFunction<double>(loss), LossFunction<long double>(loss), LossFunction<Quad>(loss), params,
                    options);
}

}  // namespace tmtsc
