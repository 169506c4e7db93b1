#include "support/fixtures.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/evaluation/metrics.hpp"
#include "tmtsc/synthetic/generator.hpp"
#include "tmtsc/training/benchmark.hpp"
#include "tmtsc/training/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace tmtsc;
using tmtsc::testing::random_batch;
using tmtsc::testing::small_config;

namespace {

double bce(const Matrix& probs, const std::vector<int>& labels) {
  Tape tape(false);
  return ad::bce_loss(tape.constant(probs), labels).value()(0, 0);
}

Matrix two_class(std::initializer_list<double> p1) {
  Matrix m(static_cast<Index>(p1.size()), 2);
  Index i = 0;
  for (double p : p1) {
    m(i, 0) = 1.0 - p;
    m(i, 1) = p;
    ++i;
  }
  return m;
}

// Small separable synthetic task shared by the fit tests.
const PreparedData& toy_data() {
  static const PreparedData data = [] {
    SynthConfig c;
    c.n_companies = 300;
    c.seed = 3;
    return prepare_dataset(generate(c), {0.7, 0.15, 0.15}, 3);
  }();
  return data;
}

ModelConfig toy_model(ModelKind kind = ModelKind::mgru) {
  ModelConfig m = small_config(kind, toy_data().vocabulary.size());
  m.gru_hidden = 8;
  return m;
}

TrainConfig toy_training(int epochs) {
  TrainConfig t;
  t.batch_size = 32;
  t.max_epochs = epochs;
  t.learning_rate = 3e-3;
  t.seed = 11;
  return t;
}

}  // namespace

TEST(BceLoss, ClosedForms) {
  EXPECT_NEAR(bce(two_class({0.5, 0.5}), {1, 0}), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce(two_class({1.0}), {1}), 0.0, 1e-11);
  EXPECT_NEAR(bce(two_class({0.0}), {0}), 0.0, 1e-11);
  // Clamping keeps saturated wrong predictions finite.
  EXPECT_NEAR(bce(two_class({0.0}), {1}), -std::log(1e-12), 1e-9);
  try {
    bce(Matrix(0, 2), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_batch);
  }
}

TEST(BceLoss, EqualsTwoClassCrossEntropy) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = rng.uniform_int(std::int64_t{1}, std::int64_t{40});
    Matrix logits(n, 2);
    std::vector<int> labels;
    for (Index i = 0; i < n; ++i) {
      logits(i, 0) = 3.0 * rng.normal();
      logits(i, 1) = 3.0 * rng.normal();
      labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    // Cross-entropy straight from the logits: log-sum-exp minus the true logit.
    double ce = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double m = std::max(logits(i, 0), logits(i, 1));
      const double lse = m + std::log(std::exp(logits(i, 0) - m) + std::exp(logits(i, 1) - m));
      ce += lse - logits(i, labels[static_cast<std::size_t>(i)]);
    }
    ce /= static_cast<double>(n);
    Tape tape(false);
    const double loss = ad::bce_loss(ad::softmax_rows(tape.constant(logits)), labels).value()(0, 0);
    EXPECT_NEAR(loss, ce, 1e-12);
  }
}

TEST(BceLoss, DuplicatedSampleBatchHasSingleSampleLoss) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const double p = rng.uniform(1e-6, 1.0 - 1e-6);
    const int y = rng.bernoulli(0.5) ? 1 : 0;
    const double single = bce(two_class({p}), {y});
    for (Index copies : {2, 3, 5, 7, 64, 500}) {
      Matrix probs(copies, 2);
      for (Index i = 0; i < copies; ++i) probs.row(i) << 1.0 - p, p;
      EXPECT_EQ(bce(probs, std::vector<int>(static_cast<std::size_t>(copies), y)), single);
    }
  }
}

TEST(BceLoss, PositiveWeightScalesPositiveTerms) {
  Tape tape(false);
  const double w = ad::bce_loss(tape.constant(two_class({0.25, 0.6})), std::vector<int>{1, 0}, 3.0).value()(0, 0);
  EXPECT_NEAR(w, -(3.0 * std::log(0.25) + std::log(0.4)) / 2.0, 1e-12);
}

TEST(Adam, SingleStepClosedForm) {
  ParameterSet ps;
  ps.add("w", {2}).value.data << 0.5, -1.0;
  ps["w"].grad << 0.3, -2e-9;
  Adam adam(0.01, 0.9, 0.999, 1e-8);
  adam.step(ps);
  // m_hat = g and v_hat = g^2 after one step, so the update is lr g / (|g| + eps).
  EXPECT_NEAR(ps["w"].value.data(0, 0), 0.5 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-12);
  EXPECT_NEAR(ps["w"].value.data(0, 1), -1.0 + 0.01 * 2e-9 / (2e-9 + 1e-8), 1e-12);
}

TEST(Adam, ThreeStepsMatchHandRecursion) {
  const double lr = 0.05, b1 = 0.8, b2 = 0.99, eps = 1e-6;
  const double grads[3] = {0.4, -0.1, 0.25};
  ParameterSet ps;
  ps.add("w", {1}).value.data(0, 0) = 1.0;
  ps.add("buffer", {1}, false).value.data(0, 0) = 7.0;
  Adam adam(lr, b1, b2, eps);
  double w = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    ps["w"].grad(0, 0) = g;
    ps["buffer"].grad(0, 0) = g;
    adam.step(ps);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(ps["w"].value.data(0, 0), w, 1e-12);
  }
  EXPECT_EQ(ps["buffer"].value.data(0, 0), 7.0);
  EXPECT_EQ(adam.steps(), 3);
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.batch_size, 512);
  c.patience = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.task = Task::gc;
  c.learning_rate = 0.25;
  c.seed = 77;
  EXPECT_EQ(train_config_from_json(to_json(c)), c);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"batchsize", 3}}), Error);
}

TEST(Fit, ZeroLearningRateLeavesParametersUnchanged) {
  const auto& d = toy_data();
  for (ModelKind kind : {ModelKind::mgru, ModelKind::tmtsc}) {
    const ModelConfig m = toy_model(kind);
    TrainConfig t = toy_training(2);
    t.learning_rate = 0.0;
    const ParameterSet init = init_params(m, 1);
    const FitResult r = fit(m, init, d.split.train, d.split.validation, t);
    for (const auto& p : r.params) {
      if (p.trainable) EXPECT_TRUE(p.value.data == init[p.name].value.data) << p.name;
    }
  }
}

TEST(Fit, SameSeedSameLosses) {
  const auto& d = toy_data();
  const ModelConfig m = toy_model(ModelKind::tmtsc);
  TrainConfig t = toy_training(2);
  const FitResult a = fit(m, init_params(m, 2), d.split.train, d.split.validation, t);
  const FitResult b = fit(m, init_params(m, 2), d.split.train, d.split.validation, t);
  EXPECT_EQ(a.report.step_losses, b.report.step_losses);
  for (const auto& p : a.params) EXPECT_TRUE(p.value.data == b.params[p.name].value.data) << p.name;
  t.seed = 12;
  const FitResult c = fit(m, init_params(m, 2), d.split.train, d.split.validation, t);
  EXPECT_NE(a.report.step_losses, c.report.step_losses);
}

TEST(Fit, LossFallsAndSelectionKeepsBestEpoch) {
  const auto& d = toy_data();
  const ModelConfig m = toy_model();
  const FitResult r = fit(m, init_params(m, 3), d.split.train, d.split.validation, toy_training(12));
  ASSERT_FALSE(r.report.epochs.empty());
  EXPECT_LT(r.report.epochs.back().train_loss, r.report.epochs.front().train_loss);
  double best = -1.0;
  int best_epoch = 0;
  for (const auto& e : r.report.epochs) {
    ASSERT_TRUE(e.validation_auc);
    if (*e.validation_auc > best) {
      best = *e.validation_auc;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(r.report.selected_epoch, best_epoch);
  EXPECT_EQ(*r.report.best_validation_auc, best);
  // The returned parameters are the selected epoch's.
  ParameterSet params = r.params;
  std::vector<int> labels;
  for (const auto& p : d.split.validation) labels.push_back(p.label_vc);
  EXPECT_EQ(auc_roc(predict_scores(params, m, d.split.validation, Task::vc, 32), labels), best);
  EXPECT_GT(r.report.seconds_per_step, 0.0);
  EXPECT_EQ(r.report.step_losses.size(),
            r.report.epochs.size() * ((d.split.train.size() + 31) / 32));
}

TEST(Fit, PatienceStopsEarly) {
  const auto& d = toy_data();
  const ModelConfig m = toy_model();
  TrainConfig t = toy_training(40);
  t.patience = 1;
  t.learning_rate = 0.05;
  const FitResult r = fit(m, init_params(m, 3), d.split.train, d.split.validation, t);
  EXPECT_TRUE(r.report.stopped_early);
  EXPECT_LT(r.report.epochs.size(), 40u);
  EXPECT_EQ(static_cast<int>(r.report.epochs.size()), r.report.selected_epoch + 1);
}

TEST(Fit, WithoutValidationReturnsFinalEpochWithWarning) {
  const auto& d = toy_data();
  const ModelConfig m = toy_model();
  const FitResult r = fit(m, init_params(m, 4), d.split.train, {}, toy_training(3));
  EXPECT_EQ(r.report.selected_epoch, 3);
  EXPECT_EQ(r.report.epochs.size(), 3u);
  EXPECT_FALSE(r.report.best_validation_auc);
  ASSERT_EQ(r.report.warnings.size(), 1u);
  const auto j = to_json(r.report);
  EXPECT_TRUE(j.at("best_validation_auc").is_null());
  EXPECT_EQ(j.at("epochs").size(), 3u);
}

TEST(Fit, NonFiniteLossIsDivergence) {
  std::vector<CompanyPanel> train = toy_data().split.train;
  train[0].X(kSteps - 1, feature::n_news) = std::numeric_limits<double>::quiet_NaN();
  const ModelConfig m = toy_model();
  TrainConfig t = toy_training(1);
  t.batch_size = static_cast<Index>(train.size());
  try {
    fit(m, init_params(m, 1), train, {}, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::divergence);
    EXPECT_NE(std::string(e.what()).find("epoch 1 step 1"), std::string::npos);
  }
}

TEST(Benchmark, PositiveTimesAndTableShape) {
  Rng rng(5);
  std::vector<std::pair<ModelKind, double>> measured;
  for (ModelKind kind : {ModelKind::tmtsc, ModelKind::te, ModelKind::mgru, ModelKind::ugru}) {
    const ModelConfig c = small_config(kind);
    const auto timing = benchmark_step_time(c, init_params(c, 1), random_batch(rng, 8, c), 3);
    EXPECT_EQ(timing.samples.size(), 3u);
    EXPECT_GT(timing.median_seconds, 0.0);
    EXPECT_TRUE(std::isfinite(timing.median_seconds));
    measured.emplace_back(kind, timing.median_seconds);
  }
  const auto rows = timing_table(measured);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].model, ModelKind::ugru);
  EXPECT_EQ(rows[1].model, ModelKind::mgru);
  EXPECT_EQ(rows[2].model, ModelKind::te);
  EXPECT_EQ(rows[3].model, ModelKind::tmtsc);
  double lowest = 1e9;
  for (const auto& r : rows) {
    EXPECT_GE(r.relative, 1.0);
    lowest = std::min(lowest, r.relative);
  }
  EXPECT_EQ(lowest, 1.0);

  const auto path = std::filesystem::temp_directory_path() / "tmtsc_timing.csv";
  write_timing_csv(path, rows);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "model,seconds_per_step,relative_time");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("U-GRU,", 0), 0u);
  std::filesystem::remove(path);
}

TEST(Benchmark, TableOfFixedTimes) {
  const std::vector<std::pair<ModelKind, double>> t{
      {ModelKind::tmtsc, 0.2}, {ModelKind::mgru, 0.05}, {ModelKind::te, 0.1}, {ModelKind::ugru, 0.4}};
  const auto rows = timing_table(t);
  EXPECT_EQ(rows[0].relative, 8.0);
  EXPECT_EQ(rows[1].relative, 1.0);
  EXPECT_EQ(rows[2].relative, 2.0);
  EXPECT_EQ(rows[3].relative, 4.0);
}
