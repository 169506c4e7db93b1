#include "tmtsc/data/pipeline.hpp"
#include "tmtsc/errors.hpp"
#include "tmtsc/numerics/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

using namespace tmtsc;

namespace {

Observation obs(int year, int month) {
  Observation o;
  o.month = {year, month};
  return o;
}

RawCompanyRecord record_with_months(int n, const std::string& id = "c", const std::string& group = "g") {
  RawCompanyRecord r;
  r.company_id = id;
  r.investor_group_id = group;
  for (int i = 0; i < n; ++i) {
    Observation o = obs(2018 + i / 12, i % 12 + 1);
    o.values[feature::n_employee] = 10.0 + i;
    r.observations.push_back(o);
  }
  return r;
}

RawCompanyRecord random_record(Rng& rng, int id) {
  RawCompanyRecord r;
  r.company_id = "c" + std::to_string(id);
  r.investor_group_id = "g" + std::to_string(rng.uniform_int(std::uint64_t{20}));
  r.label_vc = rng.bernoulli(0.5);
  r.label_gc = rng.bernoulli(0.3);
  int month = 2015 * 12 + static_cast<int>(rng.uniform_int(std::uint64_t{60}));
  const auto n = rng.uniform_int(std::int64_t{1}, std::int64_t{30});
  for (std::int64_t i = 0; i < n; ++i) {
    Observation o;
    o.month = YearMonth::from_ordinal(month);
    month += static_cast<int>(rng.uniform_int(std::int64_t{1}, std::int64_t{3}));
    if (rng.bernoulli(0.7)) o.round_type = rng.bernoulli(0.5) ? "Seed" : "Series A";
    for (int k = 1; k < kFeatures; ++k) {
      if (rng.bernoulli(0.6)) o.values[k] = std::floor(rng.uniform(0.0, 1e6)) / 7.0;
    }
    r.observations.push_back(o);
  }
  return r;
}

}  // namespace

TEST(Schema, SixteenFeaturesOneCategoricalThirteenLogged) {
  const auto& s = feature_schema();
  int categorical = 0, logged = 0;
  std::set<std::string_view> names;
  for (const auto& f : s) {
    categorical += f.kind == FeatureKind::categorical;
    logged += f.log_transform;
    names.insert(f.name);
  }
  EXPECT_EQ(s.size(), 16u);
  EXPECT_EQ(categorical, 1);
  EXPECT_EQ(logged, 13);
  EXPECT_EQ(names.size(), 16u);
  EXPECT_EQ(s[feature::round_type].name, "round_type");
  EXPECT_FALSE(s[feature::cu_popularity].log_transform);
  EXPECT_FALSE(s[feature::n_employee].log_transform);
  EXPECT_EQ(s[feature::n_founder].max, 38.0);
  EXPECT_EQ(feature_index("2x_cagr_rate"), feature::two_x_cagr_rate);
  EXPECT_EQ(schema_hash().size(), 16u);
}

TEST(AlignMonthly, InsertsGapMonths) {
  RawCompanyRecord r;
  r.company_id = "a";
  r.investor_group_id = "g";
  r.observations = {obs(2020, 1), obs(2020, 3)};
  r.observations[0].values[feature::n_news] = 1.0;
  r.observations[1].values[feature::n_news] = 2.0;
  const MonthlyGrid g = align_monthly(r);
  ASSERT_EQ(g.months(), 3u);
  EXPECT_FALSE(g.numeric[feature::n_news][1].has_value());
  EXPECT_EQ(g.observed, (std::vector<bool>{true, false, true}));
}

TEST(AlignMonthly, SingleObservationAndErrors) {
  EXPECT_EQ(align_monthly(record_with_months(1)).months(), 1u);
  RawCompanyRecord r = record_with_months(0);
  EXPECT_THROW(align_monthly(r), Error);
  try {
    align_monthly(r);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_record);
  }
  r.observations = {obs(2020, 3), obs(2020, 1)};
  EXPECT_THROW(align_monthly(r), Error);
}

TEST(Impute, TotalFundingCarriesForwardOrZero) {
  const Series in{std::nullopt, 5e6, std::nullopt, std::nullopt};
  const Series expected{0.0, 5e6, 5e6, 5e6};
  EXPECT_EQ(impute_total_funding(in), expected);
  EXPECT_EQ(impute_total_funding(Series(3)), (Series{0.0, 0.0, 0.0}));
  const Series full{1.0, 2.0};
  EXPECT_EQ(impute_total_funding(full), full);
}

TEST(Impute, TotalFundingIdempotentAndMonotone) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    Series s(static_cast<std::size_t>(rng.uniform_int(std::int64_t{0}, std::int64_t{30})));
    double level = 0.0;
    for (auto& v : s) {
      level += rng.uniform(0.0, 10.0);
      if (rng.bernoulli(0.5)) v = level;
    }
    const Series once = impute_total_funding(s);
    EXPECT_EQ(impute_total_funding(once), once);
    for (std::size_t t = 1; t < once.size(); ++t) EXPECT_LE(*once[t - 1], *once[t]);
  }
}

TEST(Impute, ValuationFromCumulativeFunding) {
  EXPECT_EQ(impute_valuation(Series{std::nullopt, 1e7}, Series{3e6, 4e6}), (Series{3e6, 1e7}));
  EXPECT_EQ(impute_valuation(Series{1.0, 2.0}, Series{5.0, 6.0}), (Series{1.0, 2.0}));
  EXPECT_EQ(impute_valuation(Series{std::nullopt}, Series{0.0}), (Series{0.0}));
}

TEST(LogScale, ClosedFormsAndDomain) {
  EXPECT_EQ(log_scale(0.0), 0.0);
  EXPECT_NEAR(log_scale(std::exp(1.0) - 1.0), 1.0, 1e-15);
  EXPECT_NEAR(log_scale(2e11), std::log(1.0 + 2e11), 1e-12);
  EXPECT_NEAR(log_scale(2e11), 26.0216, 1e-4);
  EXPECT_THROW(log_scale(-1.0), Error);
  double prev = -1.0;
  for (double x = 0.0; x < 1e12; x = x * 3.0 + 0.5) {
    const double y = log_scale(x);
    EXPECT_GT(y, prev);
    prev = y;
  }
}

TEST(FillAndPad, SixMonthsAreLeftPadded) {
  const CompanyPanel p = build_panel(record_with_months(6), CategoryVocabulary{});
  ASSERT_EQ(p.X.rows(), kSteps);
  for (int t = 0; t < 18; ++t) {
    EXPECT_EQ(p.step_mask(t), 0.0);
    EXPECT_EQ(p.X(t, feature::n_employee), kSentinel);
    EXPECT_EQ(p.X(t, feature::round_type), CategoryVocabulary::missing);
  }
  for (int t = 18; t < 24; ++t) {
    EXPECT_EQ(p.step_mask(t), 1.0);
    // n_employee is not log-scaled.
    EXPECT_EQ(p.X(t, feature::n_employee), 10.0 + (t - 18));
    // Imputed funding of 0 passes through the log.
    EXPECT_EQ(p.X(t, feature::total_funding), 0.0);
    EXPECT_EQ(p.X(t, feature::valuation), 0.0);
    EXPECT_EQ(p.X(t, feature::n_news), kSentinel);
  }
}

TEST(FillAndPad, LongHistoriesKeepMostRecentMonths) {
  const CompanyPanel p = build_panel(record_with_months(30), CategoryVocabulary{});
  EXPECT_EQ(p.step_mask.sum(), 24.0);
  EXPECT_EQ(p.X(0, feature::n_employee), 16.0);
  EXPECT_EQ(p.X(23, feature::n_employee), 39.0);
  const CompanyPanel full = build_panel(record_with_months(24), CategoryVocabulary{});
  EXPECT_EQ(full.step_mask.sum(), 24.0);
}

TEST(FillAndPad, SentinelNeverPassesThroughLog) {
  RawCompanyRecord r = record_with_months(3);
  r.observations[1].values[feature::n_investor] = std::exp(2.0) - 1.0;
  const CompanyPanel p = build_panel(r, CategoryVocabulary{});
  EXPECT_EQ(p.X(21, feature::n_investor), kSentinel);
  EXPECT_NEAR(p.X(22, feature::n_investor), 2.0, 1e-15);
  EXPECT_EQ(p.X(23, feature::n_investor), kSentinel);
}

TEST(FillAndPad, MaskMarksExactlyPaddedAndEmptyMonths) {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const RawCompanyRecord r = random_record(rng, i);
    const MonthlyGrid g = align_monthly(r);
    const CompanyPanel p = build_panel(r, CategoryVocabulary{});
    ASSERT_EQ(p.X.rows(), kSteps);
    const auto n = static_cast<int>(g.months());
    for (int t = 0; t < kSteps; ++t) {
      const int src = n - kSteps + t;
      bool any = false;
      if (src >= 0) {
        any = g.round_type[src].has_value();
        for (int k = 1; k < kFeatures; ++k) any = any || g.numeric[k][src].has_value();
      }
      EXPECT_EQ(p.step_mask(t), any ? 1.0 : 0.0) << "record " << i << " row " << t;
    }
    EXPECT_EQ(p.step_mask(kSteps - 1), 1.0);
  }
}

TEST(FilterShortSeries, KeepsIfAnyFeatureHasSixMonths) {
  RawCompanyRecord r;
  r.company_id = "a";
  r.investor_group_id = "g";
  for (int m = 1; m <= 7; ++m) {
    Observation o = obs(2021, m);
    o.values[feature::n_news] = 1.0;
    if (m <= 2) o.values[feature::n_founder] = 2.0;
    r.observations.push_back(o);
  }
  EXPECT_EQ(filter_short_series({r}).size(), 1u);

  RawCompanyRecord s = record_with_months(5);
  for (auto& o : s.observations) {
    for (int k = 1; k < kFeatures; ++k) o.values[k] = 1.0;
    o.round_type = "Seed";
  }
  EXPECT_TRUE(filter_short_series({s}).empty());
  EXPECT_TRUE(filter_short_series({record_with_months(0)}).empty());
  EXPECT_EQ(filter_short_series({record_with_months(6)}).size(), 1u);
}

TEST(Vocabulary, ReservedIdsAndSortedCategories) {
  std::vector<RawCompanyRecord> records(1);
  records[0].company_id = "a";
  records[0].investor_group_id = "g";
  for (const char* c : {"Series B", "Seed", "Series A", "Angel", "Grant", "Pre-Seed", "Series C", "Seed"}) {
    Observation o;
    o.round_type = c;
    records[0].observations.push_back(o);
  }
  const CategoryVocabulary v = build_vocabulary(records);
  EXPECT_EQ(v.size(), 2 + 7);
  EXPECT_EQ(encode_categorical("Angel", v), 2);
  EXPECT_EQ(encode_categorical("Series A", v), 6);
  EXPECT_EQ(encode_categorical("Series C", v), 8);
  EXPECT_EQ(v.categories[static_cast<std::size_t>(encode_categorical("Series B", v))], "Series B");
  EXPECT_EQ(encode_categorical("Series ZZ", v), CategoryVocabulary::unknown);
  EXPECT_EQ(encode_categorical(std::nullopt, v), CategoryVocabulary::missing);
}

TEST(Split, TwoPartsWithDisjointGroups) {
  std::vector<std::string> groups;
  for (int g = 0; g < 10; ++g) {
    for (int i = 0; i <= g % 3; ++i) groups.push_back("g" + std::to_string(g));
  }
  const auto part = assign_groups(groups, {0.8, 0.0, 0.2}, 3);
  std::set<int> used(part.begin(), part.end());
  EXPECT_EQ(used, (std::set<int>{0, 2}));
}

TEST(Split, SingletonGroupsHitTargetsWithinOne) {
  std::vector<std::string> groups;
  for (int i = 0; i < 100; ++i) groups.push_back("g" + std::to_string(i));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto part = assign_groups(groups, {0.7, 0.15, 0.15}, seed);
    int counts[3] = {0, 0, 0};
    for (int p : part) ++counts[p];
    EXPECT_NEAR(counts[0], 70, 1);
    EXPECT_NEAR(counts[1], 15, 1);
    EXPECT_NEAR(counts[2], 15, 1);
  }
}

TEST(Split, LargeGroupStaysWhole) {
  std::vector<std::string> groups(50, "big");
  for (int i = 0; i < 50; ++i) groups.push_back("s" + std::to_string(i));
  const auto part = assign_groups(groups, {0.3, 0.3, 0.4}, 1);
  for (int i = 1; i < 50; ++i) EXPECT_EQ(part[static_cast<std::size_t>(i)], part[0]);
}

TEST(Split, InfeasibleAndInvalidFractions) {
  const std::vector<std::string> groups{"a", "a", "b"};
  try {
    assign_groups(groups, {0.5, 0.25, 0.25}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::split_infeasible);
  }
  EXPECT_THROW(assign_groups(groups, {0.5, 0.6, 0.0}, 0), Error);
  EXPECT_NO_THROW(assign_groups(groups, {0.5, 0.0, 0.5}, 0));
}

TEST(Split, NoGroupInTwoPartsAcrossRandomSplits) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(std::int64_t{3}, std::int64_t{200}));
    const auto n_groups = static_cast<std::uint64_t>(rng.uniform_int(std::int64_t{3}, std::int64_t{60}));
    std::vector<std::string> groups(n);
    for (auto& g : groups) g = "g" + std::to_string(rng.uniform_int(n_groups));
    const double val = rng.bernoulli(0.3) ? 0.0 : 0.15;
    const auto part = assign_groups(groups, {0.7, val, 0.3 - val}, static_cast<std::uint64_t>(trial));
    std::map<std::string, int> seen;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [it, fresh] = seen.try_emplace(groups[i], part[i]);
      EXPECT_EQ(it->second, part[i]);
    }
    EXPECT_EQ(part.size(), n);
  }
}

TEST(Split, SameSeedSameSplit) {
  Rng rng(3);
  std::vector<CompanyPanel> panels;
  for (int i = 0; i < 60; ++i) {
    CompanyPanel p;
    p.company_id = "c" + std::to_string(i);
    p.investor_group_id = "g" + std::to_string(rng.uniform_int(std::uint64_t{25}));
    panels.push_back(p);
  }
  const auto a = investor_centric_split(panels, {}, 11);
  const auto b = investor_centric_split(panels, {}, 11);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train.size() + a.validation.size() + a.test.size(), panels.size());
}

TEST(ParseSplit, SlashSeparated) {
  const SplitFractions f = parse_split("0.73/0.13/0.14");
  EXPECT_EQ(f.train, 0.73);
  EXPECT_EQ(f.validation, 0.13);
  EXPECT_EQ(f.test, 0.14);
  EXPECT_THROW(parse_split("0.7/0.3"), Error);
  EXPECT_THROW(parse_split("a/b/c"), Error);
}

TEST(DatasetIo, RoundTripHundredRecords) {
  Rng rng(21);
  std::vector<RawCompanyRecord> records;
  for (int i = 0; i < 100; ++i) records.push_back(random_record(rng, i));
  const auto path = std::filesystem::temp_directory_path() / "tmtsc_roundtrip.jsonl";
  save_dataset(path, records);
  EXPECT_EQ(load_dataset(path), records);
  std::filesystem::remove(path);
}

TEST(DatasetIo, SchemaViolations) {
  const std::string good =
      R"({"company_id":"a","investor_group_id":"g","label_vc":1,"label_gc":0,"observations":[{"month":"2020-01","features":{"n_news":3}}]})";
  EXPECT_NO_THROW(parse_record(good, 1));
  try {
    parse_record(R"({"investor_group_id":"g","label_vc":1,"label_gc":0,"observations":[]})", 7);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
    EXPECT_NE(std::string(e.what()).find("company_id"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
  }
  std::string bad_month = good;
  bad_month.replace(bad_month.find("2020-01"), 7, "2020-13");
  EXPECT_THROW(parse_record(bad_month, 2), Error);
  try {
    parse_record("{not json", 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos);
  }
  std::string negative = good;
  negative.replace(negative.find(":3}"), 3, ":-3}");
  EXPECT_THROW(parse_record(negative, 3), Error);
}

TEST(PanelIo, RoundTripIsLossless) {
  Rng rng(5);
  std::vector<RawCompanyRecord> records;
  for (int i = 0; i < 40; ++i) records.push_back(random_record(rng, i));
  const CategoryVocabulary vocab = build_vocabulary(records);
  std::vector<CompanyPanel> panels;
  for (const auto& r : records) panels.push_back(build_panel(r, vocab));
  const auto path = std::filesystem::temp_directory_path() / "tmtsc_panels.jsonl";
  save_panels(path, panels);
  EXPECT_EQ(load_panels(path), panels);
  std::filesystem::remove(path);
}

TEST(Batch, LayoutFollowsSampleMajorRows) {
  std::vector<CompanyPanel> panels(3);
  for (int i = 0; i < 3; ++i) {
    panels[static_cast<std::size_t>(i)].X.setConstant(i);
    panels[static_cast<std::size_t>(i)].step_mask.setConstant(1.0);
    panels[static_cast<std::size_t>(i)].label_gc = i % 2;
  }
  const std::vector<std::size_t> idx{2, 0};
  const Batch b = make_batch(panels, idx, Task::gc);
  EXPECT_EQ(b.X.rows(), 2 * kSteps);
  EXPECT_EQ(b.X(0, 3), 2.0);
  EXPECT_EQ(b.X(kSteps, 3), 0.0);
  EXPECT_EQ(b.labels, (std::vector<int>{0, 0}));
  EXPECT_EQ(b.size(), 2);
}
