#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

namespace rcav {

// Which bound ends a permutation test early. `adjusted` stops once the
// Bonferroni-adjusted p can no longer fall below the threshold; `raw` waits
// until the unadjusted p cannot either, so raw decisions stay exact.
enum class StopRule { adjusted, raw, none };

std::string_view stop_rule_name(StopRule rule);
StopRule parse_stop_rule(std::string_view name);

struct HypothesisResult {
  std::string method;  // permutation, uniform or ttest
  double observed = 0.0;
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  std::size_t n_tests = 1;
  std::size_t exceedances = 0;
  std::size_t permutations_run = 0;
  std::size_t permutations_total = 0;
  bool early_stopped = false;  // p_raw is then exceedances / total, a lower bound
  bool significant = false;    // p_adjusted < threshold
  double statistic = 0.0;      // Welch t for the t-test
};

double bonferroni(double p_raw, std::size_t n_tests);

struct PermutationTestConfig {
  double threshold = 0.05;
  std::size_t n_tests = 1;
  StopRule stop = StopRule::adjusted;

  void validate() const;
};

// Smallest exceedance count after which the test can no longer be significant
// under `rule`; total + 1 when no count can certify that (StopRule::none).
std::size_t early_stop_bound(std::size_t total, const PermutationTestConfig& cfg);

// p = #{n : |S_n| >= |S_obs|} / total. Null score i is produced on demand by
// `null_score(i)` in index order, so stopping early skips the remaining work.
HypothesisResult permutation_test(double observed, std::size_t total,
                                  const std::function<double(std::size_t)>& null_score,
                                  const PermutationTestConfig& cfg);
HypothesisResult permutation_test(double observed, std::span<const double> null_scores,
                                  const PermutationTestConfig& cfg);

// Two-sided Welch test of concept scores against null scores.
// DegenerateError when both samples have zero variance.
HypothesisResult ttest_significance(std::span<const double> concept_scores, std::span<const double> null_scores,
                                    double threshold, std::size_t n_tests = 1);

}  // namespace rcav
