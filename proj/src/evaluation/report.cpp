#include "tmtsc/evaluation/report.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/evaluation/metrics.hpp"
#include "tmtsc/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace tmtsc {

using nlohmann::json;

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  // Equal values give that value and a zero spread exactly, free of rounding.
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
    s.mean = values.front();
    return s;
  }
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

namespace {

json summary_json(const Summary& s) { return json{{"mean", s.mean}, {"std", s.std}, {"n", s.count}}; }

}  // namespace

json to_json(const MetricsReport& r) {
  json seeds = json::array();
  for (const auto& s : r.per_seed) {
    seeds.push_back({{"seed", s.seed},
                     {"accuracy", s.accuracy},
                     {"precision", s.precision ? json(*s.precision) : json(nullptr)},
                     {"auc_roc", s.auc_roc}});
  }
  return json{{"model", r.model},
              {"task", r.task},
              {"threshold", r.threshold},
              {"n_test", r.n_test},
              {"n_positive", r.n_positive},
              {"per_seed", seeds},
              {"accuracy", summary_json(r.accuracy)},
              {"precision", r.precision ? summary_json(*r.precision) : json(nullptr)},
              {"auc_roc", summary_json(r.auc_roc)}};
}

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report) {
  write_file_atomic(path, to_json(report).dump(2) + "\n");
}

MetricsReport evaluate_runs(const SeededScorer& scorer, std::span<const int> test_labels, int n_seeds,
                            std::uint64_t first_seed, double threshold) {
  if (n_seeds < 1) throw Error(ErrorKind::configuration, "evaluate_runs: need at least one seed");
  MetricsReport report;
  report.threshold = threshold;
  report.n_test = test_labels.size();
  report.n_positive = static_cast<std::size_t>(std::count(test_labels.begin(), test_labels.end(), 1));
  std::vector<double> acc, prec, auc;
  for (int i = 0; i < n_seeds; ++i) {
    SeedMetrics m;
    m.seed = first_seed + static_cast<std::uint64_t>(i);
    const std::vector<double> scores = scorer(m.seed);
    if (scores.size() != test_labels.size()) {
      throw Error(ErrorKind::dimension,
                  fmt::format("seed {}: {} scores for {} test labels", m.seed, scores.size(), test_labels.size()));
    }
    const auto ap = accuracy_precision(scores, test_labels, threshold);
    m.accuracy = ap.accuracy;
    m.precision = ap.precision;
    m.auc_roc = auc_roc(scores, test_labels);
    acc.push_back(m.accuracy);
    if (m.precision) prec.push_back(*m.precision);
    auc.push_back(m.auc_roc);
    report.per_seed.push_back(m);
  }
  report.accuracy = summarize(acc);
  if (!prec.empty()) report.precision = summarize(prec);
  report.auc_roc = summarize(auc);
  return report;
}

}  // namespace tmtsc
