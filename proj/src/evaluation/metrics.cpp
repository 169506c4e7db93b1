#include "tmtsc/evaluation/metrics.hpp"

#include "tmtsc/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

namespace tmtsc {
namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::dimension, fmt::format("{} scores for {} labels", scores.size(), labels.size()));
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorKind::validation, "labels must be 0 or 1");
  }
}

void check_both_classes(std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
    throw Error(ErrorKind::undefined_metric, "AUC-ROC needs at least one positive and one negative label");
  }
}

// Indices sorted by descending score.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

AccuracyPrecision accuracy_precision(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_sizes(scores, labels);
  if (scores.empty()) throw Error(ErrorKind::empty_batch, "accuracy_precision: no samples");
  std::size_t correct = 0, tp = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int predicted = scores[i] >= threshold ? 1 : 0;
    correct += predicted == labels[i];
    tp += predicted == 1 && labels[i] == 1;
    fp += predicted == 1 && labels[i] == 0;
  }
  AccuracyPrecision out;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(scores.size());
  if (tp + fp > 0) out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  return out;
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  check_both_classes(labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Rank sum of positives with tied groups sharing their average rank. Ranks
  // are kept doubled so that every quantity stays an integer.
  long long doubled_rank_sum = 0;
  long long pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const auto doubled_avg = static_cast<long long>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        doubled_rank_sum += doubled_avg;
        ++pos;
      }
    }
    i = j;
  }
  const long long neg = static_cast<long long>(labels.size()) - pos;
  // U = rank_sum - pos (pos + 1) / 2 counts positive-negative wins plus half ties.
  const long long doubled_u = doubled_rank_sum - pos * (pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  check_both_classes(labels);
  const auto P = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto N = static_cast<double>(labels.size()) - P;
  const auto order = descending(scores);
  std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    curve.push_back({fp / N, tp / P, s});
  }
  // The lowest threshold already reaches (1, 1); the endpoint repeats it so
  // that the curve always ends with an explicit closing point.
  curve.push_back({1.0, 1.0, -std::numeric_limits<double>::infinity()});
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << "fpr,tpr,threshold\n";
  for (const auto& p : curve) out << fmt::format("{},{},{}\n", p.fpr, p.tpr, p.threshold);
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

}  // namespace tmtsc
