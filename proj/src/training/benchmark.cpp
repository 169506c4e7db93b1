#include "tmtsc/training/benchmark.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>

namespace tmtsc {

StepTiming benchmark_step_time(const ModelConfig& model, ParameterSet params, const Batch& batch, int n_steps,
                               const TrainConfig& config, int warmup) {
  if (n_steps < 1) throw Error(ErrorKind::configuration, "benchmark needs at least one timed step");
  Adam adam(config);
  Rng rng = Rng(config.seed).derive(1);
  StepTiming timing;
  for (int i = 0; i < warmup + n_steps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    params.zero_grad();
    Tape tape(true);
    const Var loss = ad::bce_loss(forward(tape, params, model, batch, Mode::train, rng).probs, batch.labels,
                                  config.positive_weight);
    tape.backward(loss);
    adam.step(params);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (i >= warmup) timing.samples.push_back(s);
  }
  std::vector<double> sorted = timing.samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  timing.median_seconds = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return timing;
}

std::vector<TimingRow> timing_table(std::span<const std::pair<ModelKind, double>> measurements) {
  if (measurements.empty()) return {};
  double fastest = measurements.front().second;
  for (const auto& [kind, s] : measurements) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(ErrorKind::validation, fmt::format("{}: step time must be positive and finite", display_name(kind)));
    }
    fastest = std::min(fastest, s);
  }
  std::vector<TimingRow> rows;
  for (ModelKind kind : all_model_kinds()) {
    for (const auto& [k, s] : measurements) {
      if (k == kind) rows.push_back({kind, s, s / fastest});
    }
  }
  return rows;
}

void write_timing_csv(const std::filesystem::path& path, std::span<const TimingRow> rows) {
  std::string out = "model,seconds_per_step,relative_time\n";
  for (const auto& r : rows) out += fmt::format("{},{},{:.2f}\n", display_name(r.model), r.seconds_per_step, r.relative);
  write_file_atomic(path, out);
}

}  // namespace tmtsc
