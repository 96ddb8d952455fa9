#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "rcav/errors.hpp"
#include "rcav/hypothesis.hpp"

using namespace rcav;

TEST(Permutation, DirectCount) {
  std::vector<double> nulls{0.1, -0.2, 0.3, -0.4};
  PermutationTestConfig cfg;
  cfg.stop = StopRule::none;
  auto r = permutation_test(0.25, nulls, cfg);
  EXPECT_EQ(r.p_raw, 0.5);
  EXPECT_EQ(r.exceedances, 2u);
  EXPECT_FALSE(r.significant);
  auto neg = permutation_test(-0.25, nulls, cfg);
  EXPECT_EQ(neg.p_raw, 0.5);
}

TEST(Permutation, DominantObservation) {
  std::vector<double> nulls(100, 0.1);
  for (std::size_t n : {1u, 5u, 1000u}) {
    PermutationTestConfig cfg;
    cfg.n_tests = n;
    auto r = permutation_test(0.5, nulls, cfg);
    EXPECT_EQ(r.p_raw, 0.0);
    EXPECT_TRUE(r.significant);
  }
}

TEST(Permutation, EarlyStopBound) {
  PermutationTestConfig cfg;
  EXPECT_EQ(early_stop_bound(500, cfg), 25u);
  cfg.n_tests = 5;
  EXPECT_EQ(early_stop_bound(500, cfg), 5u);
  cfg.stop = StopRule::raw;
  EXPECT_EQ(early_stop_bound(500, cfg), 25u);
  cfg.stop = StopRule::none;
  EXPECT_EQ(early_stop_bound(500, cfg), 501u);
}

TEST(Permutation, EarlyStopSkipsWork) {
  std::size_t calls = 0;
  PermutationTestConfig cfg;
  auto r = permutation_test(0.0, 500, [&](std::size_t) { ++calls; return 0.3; }, cfg);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(calls, 25u);
  EXPECT_EQ(r.permutations_run, 25u);
  EXPECT_FALSE(r.significant);
}

TEST(Permutation, EarlyStopNeverChangesDecision) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t total = 10 + rng() % 600;
    std::vector<double> nulls(total);
    std::normal_distribution<double> g(0.0, std::uniform_real_distribution<double>(0.05, 1.0)(rng));
    for (auto& v : nulls) v = g(rng);
    const double observed = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
    PermutationTestConfig cfg;
    cfg.threshold = std::uniform_real_distribution<double>(0.001, 0.2)(rng);
    cfg.n_tests = 1 + rng() % 10;
    cfg.stop = StopRule::none;
    const auto full = permutation_test(observed, nulls, cfg);
    for (auto rule : {StopRule::adjusted, StopRule::raw}) {
      cfg.stop = rule;
      const auto fast = permutation_test(observed, nulls, cfg);
      ASSERT_EQ(fast.significant, full.significant) << "trial " << trial;
      if (rule == StopRule::raw) ASSERT_EQ(fast.p_raw < cfg.threshold, full.p_raw < cfg.threshold);
      if (!fast.early_stopped) ASSERT_EQ(fast.p_raw, full.p_raw);
      ASSERT_LE(fast.p_raw, full.p_raw);
    }
  }
}

TEST(Permutation, RejectsBadConfig) {
  std::vector<double> nulls{0.1};
  PermutationTestConfig cfg;
  cfg.threshold = 0.0;
  EXPECT_THROW(permutation_test(0.1, nulls, cfg), ConfigError);
  cfg = {};
  cfg.n_tests = 0;
  EXPECT_THROW(permutation_test(0.1, nulls, cfg), ConfigError);
  EXPECT_THROW(parse_stop_rule("sometimes"), ConfigError);
  EXPECT_EQ(parse_stop_rule(stop_rule_name(StopRule::raw)), StopRule::raw);
}

TEST(Bonferroni, Arithmetic) {
  EXPECT_EQ(bonferroni(0.03, 1), 0.03);
  EXPECT_DOUBLE_EQ(bonferroni(0.03, 5), 0.15);
  EXPECT_EQ(bonferroni(0.3, 5), 1.0);
}

TEST(Welch, IdenticalSamples) {
  std::vector<double> a{0.1, 0.4, -0.2, 0.3};
  auto r = ttest_significance(a, a, 0.05);
  EXPECT_EQ(r.p_raw, 1.0);
  EXPECT_FALSE(r.significant);
}

TEST(Welch, SeparatedConstants) {
  std::vector<double> a{0, 1e-9, 0, -1e-9}, b{1, 1 + 1e-9, 1, 1 - 1e-9};
  auto r = ttest_significance(a, b, 0.05);
  EXPECT_LT(r.p_raw, 1e-6);
  EXPECT_TRUE(r.significant);
  std::vector<double> c{0, 0, 0}, d{1, 1, 1};
  EXPECT_THROW(ttest_significance(c, d, 0.05), DegenerateError);
  EXPECT_THROW(ttest_significance(std::vector<double>{1.0}, d, 0.05), DataError);
}

TEST(Welch, MatchesQuadratureOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n1 = 3 + rng() % 20, n2 = 3 + rng() % 20;
    auto a = oracle::gaussian(n1, rng()), b = oracle::gaussian(n2, rng());
    const double shift = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    const double scale = std::uniform_real_distribution<double>(0.2, 3.0)(rng);
    for (auto& v : b) v = v * scale + shift;
    auto r = ttest_significance(a, b, 0.05, 3);

    auto moments = [](const std::vector<double>& x) {
      double m = 0, s = 0;
      for (double v : x) m += v / double(x.size());
      for (double v : x) s += (v - m) * (v - m) / double(x.size() - 1);
      return std::pair{m, s};
    };
    auto [m1, v1] = moments(a);
    auto [m2, v2] = moments(b);
    const double se1 = v1 / double(n1), se2 = v2 / double(n2);
    const double t = (m1 - m2) / std::sqrt(se1 + se2);
    const double df = (se1 + se2) * (se1 + se2) / (se1 * se1 / double(n1 - 1) + se2 * se2 / double(n2 - 1));
    EXPECT_NEAR(r.statistic, t, 1e-9);
    EXPECT_NEAR(r.p_raw, oracle::t_two_sided(t, df), 1e-4);
    EXPECT_DOUBLE_EQ(r.p_adjusted, std::min(1.0, 3 * r.p_raw));
  }
}
