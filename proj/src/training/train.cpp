#include "tmtsc/training/train.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/evaluation/metrics.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace tmtsc {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorKind::configuration, "batch_size must be >= 1");
  if (max_epochs < 1) throw Error(ErrorKind::configuration, "max_epochs must be >= 1");
  if (patience < 1) throw Error(ErrorKind::configuration, "patience must be >= 1");
  if (!(learning_rate >= 0.0)) throw Error(ErrorKind::configuration, "learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorKind::configuration, "moment coefficients must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorKind::configuration, "epsilon must be positive");
  if (!(positive_weight > 0.0)) throw Error(ErrorKind::configuration, "positive_weight must be positive");
}

json to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},   {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},           {"beta2", c.beta2},             {"epsilon", c.epsilon},
              {"patience", c.patience},     {"seed", c.seed},               {"task", std::string(to_string(c.task))},
              {"positive_weight", c.positive_weight}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw Error(ErrorKind::configuration, "training configuration must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "batch_size") c.batch_size = value.get<Index>();
      else if (key == "max_epochs") c.max_epochs = value.get<int>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "epsilon") c.epsilon = value.get<double>();
      else if (key == "patience") c.patience = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "task") c.task = parse_task(value.get<std::string>());
      else if (key == "positive_weight") c.positive_weight = value.get<double>();
      else throw Error(ErrorKind::configuration, fmt::format("unknown training option '{}'", key));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::configuration, fmt::format("bad training option: {}", e.what()));
  }
  return c;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(ParameterSet& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.data.rows(), p.value.data.cols()));
      v_.push_back(Matrix::Zero(p.value.data.rows(), p.value.data.cols()));
    }
  }
  if (m_.size() != params.size()) throw Error(ErrorKind::dimension, "Adam: parameter set changed layout");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t i = 0;
  for (auto& p : params) {
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    ++i;
    if (!p.trainable) continue;
    m = beta1_ * m + (1.0 - beta1_) * p.grad;
    v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.data.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

json to_json(const TrainReport& r, bool include_timing) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json row{{"epoch", e.epoch},
             {"train_loss", e.train_loss},
             {"validation_auc", e.validation_auc ? json(*e.validation_auc) : json(nullptr)},
             {"validation_loss", e.validation_loss ? json(*e.validation_loss) : json(nullptr)}};
    if (include_timing) row["seconds"] = e.seconds;
    epochs.push_back(std::move(row));
  }
  json out{{"epochs", epochs},
           {"step_losses", r.step_losses},
           {"selected_epoch", r.selected_epoch},
           {"best_validation_auc", r.best_validation_auc ? json(*r.best_validation_auc) : json(nullptr)},
           {"stopped_early", r.stopped_early},
           {"warnings", r.warnings}};
  if (include_timing) out["seconds_per_step"] = r.seconds_per_step;
  return out;
}

std::vector<double> predict_scores(ParameterSet& params, const ModelConfig& model,
                                   std::span<const CompanyPanel> panels, Task task, Index chunk) {
  std::vector<double> scores;
  scores.reserve(panels.size());
  for (std::size_t start = 0; start < panels.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t n = std::min(panels.size() - start, static_cast<std::size_t>(chunk));
    const Matrix p = predict_proba(params, model, make_batch(panels.subspan(start, n), task));
    for (Index i = 0; i < p.rows(); ++i) scores.push_back(p(i, 1));
  }
  return scores;
}

namespace {

double mean_bce(std::span<const double> scores, std::span<const int> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = std::clamp(scores[i], 1e-12, 1.0 - 1e-12);
    total += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(scores.size());
}

bool has_both_classes(std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  return pos > 0 && pos < static_cast<std::ptrdiff_t>(labels.size());
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace

FitResult fit(const ModelConfig& model, ParameterSet params, std::span<const CompanyPanel> train,
              std::span<const CompanyPanel> validation, const TrainConfig& config, const EpochCallback& on_epoch) {
  model.validate();
  config.validate();
  if (train.empty()) throw Error(ErrorKind::empty_batch, "fit: no training panels");

  TrainReport report;
  std::vector<int> val_labels;
  for (const auto& p : validation) val_labels.push_back(label_of(p, config.task));
  const bool select = has_both_classes(val_labels);
  if (!select) {
    const std::string why = validation.empty() ? "no validation panels"
                                               : "validation panels hold a single class, so AUC-ROC is undefined";
    report.warnings.push_back(fmt::format("{}: early stopping disabled, returning final-epoch parameters", why));
    spdlog::warn("{}", report.warnings.back());
  }

  Rng shuffle_rng = Rng(config.seed).derive(0);
  Rng dropout_rng = Rng(config.seed).derive(1);
  Adam adam(config);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> step_seconds;
  ParameterSet best = params;
  int since_best = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    int step = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++step) {
      const auto step_start = std::chrono::steady_clock::now();
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      const Batch batch = make_batch(train, idx, config.task);
      params.zero_grad();
      Tape tape(true);
      const Var loss =
          ad::bce_loss(forward(tape, params, model, batch, Mode::train, dropout_rng).probs, batch.labels,
                       config.positive_weight);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        throw Error(ErrorKind::divergence, fmt::format("non-finite loss at epoch {} step {}", epoch, step + 1));
      }
      tape.backward(loss);
      adam.step(params);
      report.step_losses.push_back(value);
      loss_sum += value * static_cast<double>(idx.size());
      step_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - step_start).count());
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    if (!validation.empty()) {
      const auto scores = predict_scores(params, model, validation, config.task, config.batch_size);
      record.validation_loss = mean_bce(scores, val_labels);
      if (select) record.validation_auc = auc_roc(scores, val_labels);
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    report.epochs.push_back(record);

    if (select) {
      if (!report.best_validation_auc || *record.validation_auc > *report.best_validation_auc) {
        report.best_validation_auc = record.validation_auc;
        report.selected_epoch = epoch;
        best = params;
        since_best = 0;
      } else {
        ++since_best;
      }
    } else {
      report.selected_epoch = epoch;
    }
    spdlog::debug("epoch {} loss {:.6f} val auc {}", epoch, record.train_loss,
                  record.validation_auc ? fmt::format("{:.4f}", *record.validation_auc) : "n/a");
    const bool keep_going = !on_epoch || on_epoch(record);
    if (select && since_best >= config.patience) {
      report.stopped_early = epoch < config.max_epochs;
      break;
    }
    if (!keep_going) break;
  }
  report.seconds_per_step = median(step_seconds);
  return {select ? std::move(best) : std::move(params), std::move(report)};
}

}  // namespace tmtsc
