#include "tmtsc/errors.hpp"
#include "tmtsc/evaluation/metrics.hpp"
#include "tmtsc/numerics/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace tmtsc;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

Instance random_instance(Rng& rng) {
  Instance in;
  const auto n = static_cast<std::size_t>(rng.uniform_int(std::int64_t{2}, std::int64_t{50}));
  const auto levels = rng.uniform_int(std::int64_t{2}, std::int64_t{12});
  for (std::size_t i = 0; i < n; ++i) {
    // Coarse levels produce plenty of ties.
    in.scores.push_back(static_cast<double>(rng.uniform_int(static_cast<std::uint64_t>(levels))) / levels);
    in.labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
  }
  in.labels[0] = 1;
  in.labels[1] = 0;
  return in;
}

}  // namespace

TEST(AccuracyPrecision, Counting) {
  const std::vector<double> s{0.9, 0.8, 0.1, 0.2};
  const std::vector<int> y{1, 0, 0, 0};
  const auto r = accuracy_precision(s, y);
  EXPECT_EQ(r.accuracy, 0.75);
  ASSERT_TRUE(r.precision);
  EXPECT_EQ(*r.precision, 0.5);
}

TEST(AccuracyPrecision, UndefinedPrecisionAndPerfect) {
  const std::vector<int> y{1, 0};
  EXPECT_FALSE(accuracy_precision(std::vector<double>{0.1, 0.2}, y).precision);
  const auto r = accuracy_precision(std::vector<double>{0.9, 0.1}, y);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(*r.precision, 1.0);
  EXPECT_EQ(accuracy_precision(std::vector<double>{0.5, 0.4}, y).accuracy, 1.0);
}

TEST(AccuracyPrecision, PermutationInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Instance in = random_instance(rng);
    const auto a = accuracy_precision(in.scores, in.labels, 0.4);
    std::vector<std::size_t> perm(in.scores.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    Instance p;
    for (auto i : perm) {
      p.scores.push_back(in.scores[i]);
      p.labels.push_back(in.labels[i]);
    }
    const auto b = accuracy_precision(p.scores, p.labels, 0.4);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_EQ(a.precision, b.precision);
  }
}

TEST(AucRoc, Examples) {
  EXPECT_EQ(auc_roc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_EQ(auc_roc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{0, 1, 1}), 0.5);
  EXPECT_EQ(auc_roc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  try {
    auc_roc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::undefined_metric);
  }
}

TEST(AucRoc, MatchesPairwiseOracleWithTies) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance in = random_instance(rng);
    EXPECT_NEAR(auc_roc(in.scores, in.labels), pairwise_auc(in.scores, in.labels), 1e-12);
  }
}

TEST(AucRoc, InvariantUnderMonotoneTransform) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Instance in = random_instance(rng);
    std::vector<double> t;
    for (double s : in.scores) t.push_back(std::exp(3.0 * s) - 7.0);
    EXPECT_EQ(auc_roc(in.scores, in.labels), auc_roc(t, in.labels));
  }
}

TEST(RocCurve, EndpointsMonotoneAndArea) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance in = random_instance(rng);
    const auto c = roc_curve(in.scores, in.labels);
    EXPECT_EQ(c.front().fpr, 0.0);
    EXPECT_EQ(c.front().tpr, 0.0);
    EXPECT_EQ(c.back().fpr, 1.0);
    EXPECT_EQ(c.back().tpr, 1.0);
    for (std::size_t i = 1; i < c.size(); ++i) {
      EXPECT_GE(c[i].fpr, c[i - 1].fpr);
      EXPECT_GE(c[i].tpr, c[i - 1].tpr);
    }
    EXPECT_NEAR(trapezoid_area(c), auc_roc(in.scores, in.labels), 1e-12);
  }
}

TEST(RocCurve, PerfectAndTwoScores) {
  const auto perfect = roc_curve(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1});
  bool corner = false;
  for (const auto& p : perfect) corner = corner || (p.fpr == 0.0 && p.tpr == 1.0);
  EXPECT_TRUE(corner);
  EXPECT_EQ(roc_curve(std::vector<double>{0.2, 0.7, 0.7, 0.2}, std::vector<int>{0, 1, 0, 1}).size(), 4u);
}

TEST(RocCurve, CsvHeader) {
  const auto path = std::filesystem::temp_directory_path() / "tmtsc_roc.csv";
  write_roc_csv(path, roc_curve(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1}));
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "fpr,tpr,threshold");
  std::filesystem::remove(path);
}
