#pragma once

#include "tmtsc/data/pipeline.hpp"
#include "tmtsc/models/model.hpp"
#include "tmtsc/training/train.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace tmtsc {

struct StepTiming {
  double median_seconds = 0.0;
  std::vector<double> samples;  // warm-up steps excluded
};

/// Times full optimization steps (forward, backward, update) on one batch.
/// The first `warmup` steps are run but not timed.
StepTiming benchmark_step_time(const ModelConfig& model, ParameterSet params, const Batch& batch, int n_steps,
                               const TrainConfig& config = {}, int warmup = 3);

struct TimingRow {
  ModelKind model;
  double seconds_per_step = 0.0;
  double relative = 0.0;  // seconds / fastest seconds
};

/// Rows in table order (U-GRU, M-GRU, TE, TMTSC) with the fastest at 1.0.
std::vector<TimingRow> timing_table(std::span<const std::pair<ModelKind, double>> measurements);
/// Columns model,seconds_per_step,relative_time.
void write_timing_csv(const std::filesystem::path& path, std::span<const TimingRow> rows);

}  // namespace tmtsc
