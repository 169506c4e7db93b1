#include "tmtsc/synthetic/generator.hpp"

#include "tmtsc/data/schema.hpp"
#include "tmtsc/errors.hpp"
#include "tmtsc/numerics/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tmtsc {

double compute_cagr(double start_value, double exit_value, double years) {
  if (!(start_value > 0.0) || !(exit_value > 0.0) || !(years > 0.0)) {
    throw Error(ErrorKind::domain, fmt::format("compute_cagr: arguments must be positive (SV={}, EV={}, Y={})",
                                               start_value, exit_value, years));
  }
  return std::pow(exit_value / start_value, 1.0 / years) - 1.0;
}

void SynthConfig::validate() const {
  auto fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::configuration, fmt::format("{} must lie in [0, 1]", name));
  };
  if (n_companies < 1) throw Error(ErrorKind::configuration, "n_companies must be >= 1");
  fraction(class_balance_vc, "class_balance_vc");
  fraction(class_balance_gc, "class_balance_gc");
  fraction(signal_strength, "signal_strength");
  fraction(missing_rate, "missing_rate");
  if (min_months < 1 || max_months > 36 || min_months > max_months) {
    throw Error(ErrorKind::configuration, "series length bounds must satisfy 1 <= min_months <= max_months <= 36");
  }
  if (n_round_types < 1 || n_round_types > static_cast<int>(round_stages().size())) {
    throw Error(ErrorKind::configuration, fmt::format("n_round_types must lie in [1, {}]", round_stages().size()));
  }
  if (!(companies_per_group >= 1.0)) throw Error(ErrorKind::configuration, "companies_per_group must be >= 1");
  if (!(label_scale >= 0.0)) throw Error(ErrorKind::configuration, "label_scale must be >= 0");
}

const std::vector<std::string>& round_stages() {
  static const std::vector<std::string> stages{
      "Pre-Seed", "Seed",     "Angel",    "Series A", "Series B", "Series C",
      "Series D", "Series E", "Series F", "Growth",   "Late Stage", "Pre-IPO",
  };
  return stages;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Midpoint grid over N(0, 1) used by the label calibration helpers.
struct NormalGrid {
  std::vector<double> q, w;
  NormalGrid() {
    constexpr int n = 20000;
    constexpr double lo = -10.0, hi = 10.0;
    const double dq = (hi - lo) / n;
    q.resize(n);
    w.resize(n);
    for (int i = 0; i < n; ++i) {
      q[i] = lo + (i + 0.5) * dq;
      w[i] = std::exp(-0.5 * q[i] * q[i]) / std::sqrt(2.0 * std::numbers::pi) * dq;
    }
  }
};

const NormalGrid& normal_grid() {
  static const NormalGrid grid;
  return grid;
}

double expected_positive(double slope, double offset) {
  const auto& g = normal_grid();
  double sum = 0.0;
  for (std::size_t i = 0; i < g.q.size(); ++i) sum += g.w[i] * sigmoid(slope * g.q[i] + offset);
  return sum;
}

double clamp_to(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

RawCompanyRecord generate_company(const SynthConfig& config, int index, double offset_vc, double offset_gc) {
  Rng rng = Rng(config.seed).derive(static_cast<std::uint64_t>(index));
  const double q = rng.normal();
  const double g = config.signal_strength * q;
  const double a = config.signal_strength * config.label_scale;

  RawCompanyRecord r;
  r.company_id = fmt::format("company-{:06d}", index);
  const auto n_groups = static_cast<std::uint64_t>(
      std::max(1.0, std::round(config.n_companies / config.companies_per_group)));
  r.investor_group_id = fmt::format("group-{:05d}", rng.uniform_int(n_groups));
  r.label_vc = rng.bernoulli(sigmoid(a * q + offset_vc)) ? 1 : 0;
  r.label_gc = rng.bernoulli(sigmoid(a * q + offset_gc)) ? 1 : 0;

  const auto months = static_cast<int>(rng.uniform_int(std::int64_t{config.min_months}, std::int64_t{config.max_months}));
  const int start = 2012 * 12 + static_cast<int>(rng.uniform_int(std::uint64_t{96}));

  // Company-level rates; better companies grow faster and raise more.
  const double growth = 0.025 + 0.02 * g + 0.005 * rng.normal();
  const double employees0 = std::exp(std::log(4.0) + 0.4 * rng.normal());
  const double traffic0 = 6.0 + 1.0 * g + 0.3 * rng.normal();
  const double growth_investor_base = -0.8 + 0.9 * g;
  const double round_rate = clamp_to(0.04 * std::exp(0.6 * g), 0.005, 0.3);
  const double news_rate = std::exp(-1.2 + 0.6 * g);
  const int last_stage = config.n_round_types - 1;

  int stage = std::min(static_cast<int>(rng.uniform_int(std::uint64_t{2})), last_stage);
  double funding = 0.0;
  double valuation = 0.0;
  double investors = 0.0;
  double founders = static_cast<double>(rng.uniform_int(std::int64_t{1}, std::int64_t{4}));
  double news = 1.0;
  std::vector<double> deal_cagrs;

  auto maybe = [&](double v) -> std::optional<double> {
    if (rng.bernoulli(config.missing_rate)) return std::nullopt;
    return v;
  };

  auto raise = [&] {
    funding = std::min(funding + std::round(std::exp(13.5 + 1.2 * g + 0.4 * stage + 0.5 * rng.normal())), 2e11);
    valuation = std::min(std::round(funding * std::exp(1.2 + 0.3 * g + 0.3 * rng.normal())), 1e12);
    const auto joined = 1 + rng.poisson(std::max(0.2, 1.0 + 0.5 * g));
    investors = std::min(investors + static_cast<double>(joined), 240.0);
    // Past exits of the incoming investors.
    for (std::int64_t i = 0; i < 3 * joined; ++i) {
      const double multiple = std::max(1.0, std::exp(0.8 + 0.5 * g + 0.6 * rng.normal()));
      deal_cagrs.push_back(compute_cagr(1.0, multiple, rng.uniform(0.5, 3.0)));
    }
  };

  raise();
  for (int t = 0; t < months; ++t) {
    bool round_now = t == 0;
    if (t > 0 && rng.bernoulli(round_rate)) {
      stage = std::min(stage + 1, last_stage);
      raise();
      round_now = true;
    }
    if (founders > 0 && rng.bernoulli(0.01 * (1.0 - 0.5 * std::tanh(g)))) founders -= 1;
    news = std::min(news + static_cast<double>(rng.poisson(news_rate)), 389.0);
    const double log_traffic = traffic0 + 1.5 * growth * t + 0.15 * rng.normal();
    const double employees = clamp_to(std::round(employees0 * std::exp(growth * t + 0.05 * rng.normal())), 1.0, 113757.0);
    double avg = 0.0, two_x = 0.0;
    for (double c : deal_cagrs) {
      avg += c;
      two_x += c >= 2.0 ? 1.0 : 0.0;
    }
    avg /= static_cast<double>(deal_cagrs.size());
    two_x /= static_cast<double>(deal_cagrs.size());

    Observation o;
    o.month = YearMonth::from_ordinal(start + t);
    if (!rng.bernoulli(config.missing_rate)) o.round_type = round_stages()[static_cast<std::size_t>(stage)];
    o.values[feature::total_funding] = maybe(funding);
    if (round_now) o.values[feature::valuation] = maybe(valuation);
    o.values[feature::n_founder] = maybe(founders);
    o.values[feature::n_employee] = maybe(employees);
    o.values[feature::n_investor] = maybe(investors);
    o.values[feature::growth_investor_rate] = maybe(sigmoid(growth_investor_base + 0.15 * rng.normal()));
    o.values[feature::average_cagr] = maybe(avg);
    o.values[feature::two_x_cagr_rate] = maybe(two_x);
    // Popularity as a score in (0, 1); the feature is not log-scaled downstream.
    o.values[feature::cu_popularity] = maybe(sigmoid(log_traffic - 8.0));
    o.values[feature::sw_global_rank] = maybe(std::max(1.0, std::round(3e7 * std::exp(-0.8 * log_traffic))));
    o.values[feature::n_desktop_visitor] = maybe(std::round(std::exp(log_traffic)));
    o.values[feature::n_mobile_visitor] = maybe(std::round(std::exp(log_traffic) * rng.uniform(0.5, 1.5)));
    o.values[feature::n_news] = maybe(news);
    o.values[feature::n_regional_seed_round] = maybe(static_cast<double>(rng.poisson(25.0)));
    o.values[feature::n_regional_series_ab] = maybe(static_cast<double>(rng.poisson(10.0)));
    r.observations.push_back(std::move(o));
  }
  return r;
}

}  // namespace

double label_offset(double slope, double balance) {
  if (balance <= 0.0) return -1e3;
  if (balance >= 1.0) return 1e3;
  double lo = -60.0, hi = 60.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (expected_positive(slope, mid) < balance ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double bayes_auc(double slope, double offset) {
  const auto& g = normal_grid();
  double pos = 0.0, neg = 0.0, below = 0.0, area = 0.0;
  for (std::size_t i = 0; i < g.q.size(); ++i) {
    const double p = sigmoid(slope * g.q[i] + offset);
    const double f1 = g.w[i] * p, f0 = g.w[i] * (1.0 - p);
    area += f1 * (below + 0.5 * f0);
    below += f0;
    pos += f1;
    neg += f0;
  }
  return area / (pos * neg);
}

double calibrate_label_scale(double target_auc) {
  double lo = 0.0, hi = 100.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (bayes_auc(mid, 0.0) < target_auc ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<RawCompanyRecord> generate(const SynthConfig& config) {
  config.validate();
  const double a = config.signal_strength * config.label_scale;
  const double offset_vc = label_offset(a, config.class_balance_vc);
  const double offset_gc = label_offset(a, config.class_balance_gc);
  std::vector<RawCompanyRecord> records;
  records.reserve(static_cast<std::size_t>(config.n_companies));
  for (int i = 0; i < config.n_companies; ++i) records.push_back(generate_company(config, i, offset_vc, offset_gc));
  return records;
}

}  // namespace tmtsc
