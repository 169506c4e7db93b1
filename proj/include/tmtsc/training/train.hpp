#pragma once

#include "tmtsc/data/pipeline.hpp"
#include "tmtsc/models/model.hpp"
#include "tmtsc/numerics/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tmtsc {

struct TrainConfig {
  Index batch_size = 512;
  int max_epochs = 100;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int patience = 10;  // epochs without a better validation AUC
  std::uint64_t seed = 0;
  Task task = Task::vc;
  double positive_weight = 1.0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Adaptive-moment optimizer over the trainable tensors of a parameter set.
/// Moments are keyed by position, so the set must keep its layout.
class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon);
  explicit Adam(const TrainConfig& c) : Adam(c.learning_rate, c.beta1, c.beta2, c.epsilon) {}

  /// theta -= lr * m_hat / (sqrt(v_hat) + eps) using each parameter's grad.
  void step(ParameterSet& params);
  [[nodiscard]] long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> validation_auc;
  std::optional<double> validation_loss;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  int selected_epoch = 0;
  std::optional<double> best_validation_auc;
  double seconds_per_step = 0.0;  // median over all steps
  bool stopped_early = false;
  std::vector<std::string> warnings;
};

/// Wall-clock fields are left out when include_timing is false, which makes
/// the output a pure function of data, configuration and seed.
nlohmann::json to_json(const TrainReport& report, bool include_timing = true);

struct FitResult {
  ParameterSet params;
  TrainReport report;
};

/// Called after every epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&)>;

/// Mini-batch training from the given initial parameters. The parameters of
/// the epoch with the highest validation AUC-ROC are returned; without a
/// usable validation set the final epoch is returned and a warning logged.
FitResult fit(const ModelConfig& model, ParameterSet params, std::span<const CompanyPanel> train,
              std::span<const CompanyPanel> validation, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

/// Class-1 probabilities for every panel, evaluated in chunks.
std::vector<double> predict_scores(ParameterSet& params, const ModelConfig& model,
                                   std::span<const CompanyPanel> panels, Task task, Index chunk = 256);

}  // namespace tmtsc
