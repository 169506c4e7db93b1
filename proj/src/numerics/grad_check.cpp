#include "tmtsc/numerics/grad_check.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/numerics/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace tmtsc {
namespace {

template <typename S>
struct Evaluation {
  S loss;
  std::uint64_t signature;
};

template <typename S>
Evaluation<S> evaluate(const LossFunction<S>& loss, BasicParameterSet<S>& params) {
  BasicTape<S> tape(false);
  tape.set_track_kinks(true);
  const auto l = loss(tape, params);
  return {l.value()(0, 0), tape.kink_signature()};
}

struct Difference {
  double value = 0.0;
  bool kink = false;
};

// Central difference of coordinate c of parameter name around pristine.
template <typename S>
Difference central_difference(const LossFunction<S>& loss, const BasicParameterSet<S>& pristine,
                              const std::string& name, Index c, double step, std::uint64_t base_signature) {
  using std::isfinite;
  const S h = step;
  BasicParameterSet<S> work = pristine;
  const S original = pristine[name].value.data.data()[c];
  work[name].value.data.data()[c] = original + h;
  const Evaluation<S> plus = evaluate(loss, work);
  work[name].value.data.data()[c] = original - h;
  const Evaluation<S> minus = evaluate(loss, work);
  if (!isfinite(plus.loss) || !isfinite(minus.loss)) {
    throw Error(ErrorKind::numeric_input, "grad_check: non-finite loss while perturbing " + name);
  }
  if (plus.signature != base_signature || minus.signature != base_signature) return {0.0, true};
  return {static_cast<double>((plus.loss - minus.loss) / (2 * h)), false};
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const LossFunction<double>& analytic, const LossFunction<long double>& reference,
                           const LossFunction<Quad>& exact, ParameterSet& params, const GradCheckOptions& options) {
  // The reference copies are taken first so that buffers mutated by a
  // train-mode forward pass do not leak into them.
  const BasicParameterSet<long double> wide = params.cast<long double>();
  const BasicParameterSet<Quad> quad = params.cast<Quad>();
  params.zero_grad();
  {
    Tape tape(true);
    const Var l = analytic(tape, params);
    if (l.value().size() != 1) throw Error(ErrorKind::dimension, "grad_check: loss must be scalar");
    if (!std::isfinite(l.value()(0, 0))) throw Error(ErrorKind::numeric_input, "grad_check: non-finite loss");
    tape.backward(l);
  }
  BasicParameterSet<long double> scratch = wide;
  const std::uint64_t base = evaluate(reference, scratch).signature;
  std::optional<std::uint64_t> quad_base;

  Rng rng(options.seed);
  GradCheckReport report;
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    ParameterGradCheck check;
    check.name = p.name;

    std::vector<Index> coords(static_cast<std::size_t>(p.numel()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (static_cast<int>(coords.size()) > options.coordinates_per_parameter) {
      rng.shuffle(coords);
      coords.resize(static_cast<std::size_t>(options.coordinates_per_parameter));
      std::sort(coords.begin(), coords.end());
    }

    for (Index c : coords) {
      const double analytic_value = p.grad.data()[c];
      Difference d = central_difference(reference, wide, p.name, c, options.step, base);
      if (!d.kink && relative_error(analytic_value, d.value) >= options.tolerance) {
        if (!quad_base) {
          BasicParameterSet<Quad> copy = quad;
          quad_base = evaluate(exact, copy).signature;
        }
        d = central_difference(exact, quad, p.name, c, options.step, *quad_base);
        ++check.refined;
      }
      if (d.kink) {
        ++check.skipped;
        continue;
      }
      const double err = relative_error(analytic_value, d.value);
      if (err > check.max_rel_error || check.worst_index < 0) {
        check.max_rel_error = err;
        check.worst_index = c;
        check.worst_analytic = analytic_value;
        check.worst_numeric = d.value;
      }
      ++check.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.skipped += check.skipped;
    if (check.max_rel_error >= options.tolerance) report.passed = false;
    report.parameters.push_back(std::move(check));
  }
  return report;
}

}  // namespace tmtsc
