#pragma once

#include "tmtsc/data/records.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tmtsc {

/// (exit / start)^(1 / years) - 1; all arguments must be positive.
double compute_cagr(double start_value, double exit_value, double years);

/// Label slope that gives a Bayes AUC of 0.97 for balanced classes at full
/// signal. Produced by calibrate_label_scale(0.97) and checked by a test.
inline constexpr double kCalibratedLabelScale = 5.5;

struct SynthConfig {
  int n_companies = 2000;
  std::uint64_t seed = 0;
  double class_balance_vc = 0.5;
  double class_balance_gc = 0.5;
  double signal_strength = 1.0;
  double missing_rate = 0.1;
  int min_months = 1;
  int max_months = 36;
  int n_round_types = 12;
  // About this many companies share an investor group on average.
  double companies_per_group = 3.0;
  double label_scale = kCalibratedLabelScale;

  void validate() const;
};

/// Ordered funding stages; the first n_round_types are used.
const std::vector<std::string>& round_stages();

/// Each company has a latent quality q ~ N(0, 1). Trajectories depend on
/// signal_strength * q, and each task draws its label with
/// P(y = 1) = sigmoid(signal_strength * label_scale * q + offset), where the
/// offset is solved so that the expected positive fraction equals the
/// configured class balance.
std::vector<RawCompanyRecord> generate(const SynthConfig& config);

/// Offset b with E[sigmoid(a q + b)] = balance for q ~ N(0, 1).
double label_offset(double slope, double balance);
/// AUC of the ideal score q for labels drawn with P(y = 1) = sigmoid(a q + b).
double bayes_auc(double slope, double offset);
/// Slope a with bayes_auc(a, 0) == target.
double calibrate_label_scale(double target_auc);

}  // namespace tmtsc
