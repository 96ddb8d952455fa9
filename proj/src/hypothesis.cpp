#include "rcav/hypothesis.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "rcav/errors.hpp"

namespace rcav {

std::string_view stop_rule_name(StopRule rule) {
  switch (rule) {
    case StopRule::adjusted: return "adjusted";
    case StopRule::raw: return "raw";
    case StopRule::none: return "none";
  }
  return "?";
}

StopRule parse_stop_rule(std::string_view name) {
  if (name == "adjusted") return StopRule::adjusted;
  if (name == "raw") return StopRule::raw;
  if (name == "none") return StopRule::none;
  throw ConfigError("unknown early-stop rule: " + std::string(name));
}

double bonferroni(double p_raw, std::size_t n_tests) {
  return std::min(1.0, p_raw * static_cast<double>(n_tests));
}

void PermutationTestConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("significance threshold must lie in (0,1)");
  if (n_tests == 0) throw ConfigError("n_tests must be at least 1");
}

std::size_t early_stop_bound(std::size_t total, const PermutationTestConfig& cfg) {
  if (cfg.stop == StopRule::none) return total + 1;
  const std::size_t n = cfg.stop == StopRule::raw ? 1 : cfg.n_tests;
  for (std::size_t e = 0; e <= total; ++e) {
    const double p = static_cast<double>(e) / static_cast<double>(total);
    if (!(bonferroni(p, n) < cfg.threshold)) return e;
  }
  return total + 1;
}

HypothesisResult permutation_test(double observed, std::size_t total,
                                  const std::function<double(std::size_t)>& null_score,
                                  const PermutationTestConfig& cfg) {
  cfg.validate();
  if (total == 0) throw DataError("permutation test needs a nonempty null distribution");
  HypothesisResult r;
  r.method = "permutation";
  r.observed = observed;
  r.n_tests = cfg.n_tests;
  r.permutations_total = total;
  const std::size_t bound = early_stop_bound(total, cfg);
  const double obs = std::abs(observed);
  for (std::size_t i = 0; i < total; ++i) {
    if (std::abs(null_score(i)) >= obs) ++r.exceedances;
    r.permutations_run = i + 1;
    if (r.exceedances >= bound && r.permutations_run < total) {
      r.early_stopped = true;
      break;
    }
  }
  r.p_raw = static_cast<double>(r.exceedances) / static_cast<double>(total);
  r.p_adjusted = bonferroni(r.p_raw, r.n_tests);
  r.significant = r.p_adjusted < cfg.threshold;
  return r;
}

HypothesisResult permutation_test(double observed, std::span<const double> null_scores,
                                  const PermutationTestConfig& cfg) {
  return permutation_test(observed, null_scores.size(), [&](std::size_t i) { return null_scores[i]; }, cfg);
}

HypothesisResult ttest_significance(std::span<const double> concept_scores, std::span<const double> null_scores,
                                    double threshold, std::size_t n_tests) {
  if (concept_scores.size() < 2 || null_scores.size() < 2) throw DataError("t-test needs at least two scores per group");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("significance threshold must lie in (0,1)");
  auto moments = [](std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::pair{m, ss / static_cast<double>(x.size() - 1)};
  };
  const auto [m1, v1] = moments(concept_scores);
  const auto [m2, v2] = moments(null_scores);
  if (v1 == 0.0 && v2 == 0.0) throw DegenerateError("t-test: both samples have zero variance");
  const double n1 = static_cast<double>(concept_scores.size()), n2 = static_cast<double>(null_scores.size());
  const double a = v1 / n1, b = v2 / n2;
  const double t = (m1 - m2) / std::sqrt(a + b);
  const double df = (a + b) * (a + b) / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
  const boost::math::students_t dist(df);
  HypothesisResult r;
  r.method = "ttest";
  r.observed = m1;
  r.statistic = t;
  r.n_tests = n_tests;
  r.permutations_total = null_scores.size();
  r.permutations_run = null_scores.size();
  r.p_raw = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  r.p_adjusted = bonferroni(r.p_raw, n_tests);
  r.significant = r.p_adjusted < threshold;
  return r;
}

}  // namespace rcav
