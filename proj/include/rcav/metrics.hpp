#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rcav/hypothesis.hpp"
#include "rcav/linalg.hpp"
#include "rcav/nn.hpp"
#include "rcav/tensor.hpp"

namespace rcav {

struct MetricsConfig {
  double binarize_percentile = 75.0;
  std::size_t tau_permutations = 1000;
  std::uint64_t seed = 0;
  bool signed_truth = false;  // binarize s~ itself instead of |s~|

  void validate() const;
};

// Fraction of the n(n-1)/2 pairs where (pred_i >= pred_j) == (truth_i >= truth_j).
double p_tau(std::span<const double> pred, std::span<const double> truth);

// Tie-corrected Kendall tau in O(n log n). DegenerateError when either input
// is constant.
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

struct KendallResult {
  double tau = 0.0;
  double p_value = 1.0;  // fraction of shuffles with |tau_perm| >= |tau|
  std::size_t permutations = 0;
};

KendallResult kendall_tau_perm(std::span<const double> pred, std::span<const double> truth,
                               std::size_t permutations, std::uint64_t seed);

// Linear-interpolation percentile, q in [0, 100].
double percentile(std::span<const double> values, double q);

// 1 where |truth| (or truth, when signed) exceeds its q-th percentile.
std::vector<int> binarize_truth(std::span<const double> truth, double q, bool signed_truth = false);

// Mann-Whitney AUROC with half credit for ties. DegenerateError when only one
// class is present.
double auroc(std::span<const double> scores, std::span<const int> labels);
// Sum over distinct thresholds of (R_i - R_{i-1}) * P_i, no interpolation.
double auprc(std::span<const double> scores, std::span<const int> labels);

struct FprReport {
  std::size_t runs = 0;
  std::size_t raw_positives = 0;
  std::size_t adjusted_positives = 0;
  double raw = 0.0;
  double adjusted = 0.0;
};

FprReport fpr_report(std::span<const HypothesisResult> results, double threshold);

struct LinearityBound {
  std::string layer;
  double residual_fraction = 0.0;
  double explained_fraction = 0.0;
  double singular_value = 0.0;
  double frobenius = 0.0;
  std::size_t n_samples = 0;
  std::size_t dim = 0;
  bool converged = false;
};

// Rank-1 approximation quality of D, whose rows are pairwise differences.
LinearityBound linearity_bound(const Tensor& differences, const std::string& layer,
                               const PowerIterationOptions& opts = {});

// D rows are f_l(x_i) - f_l(x'_i).
LinearityBound svd_linearity_bound(const nn::Model& model, const Tensor& x, const Tensor& x_prime,
                                   const std::string& layer, const PowerIterationOptions& opts = {});

struct MetricRow {
  std::string metric;
  std::string layer;
  std::string method;
  double value = 0.0;
  double p_value = 0.0;
  bool has_p_value = false;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

// Columns metric,layer,method,value,p_value,n,seed,config_hash after a
// "# rcav config_hash=..." line.
void write_metrics_csv(std::span<const MetricRow> rows, const std::filesystem::path& path,
                       const std::string& config_hash);
// Two columns: pred s, truth s~.
void write_plot_tsv(std::span<const double> pred, std::span<const double> truth, const std::filesystem::path& path);

}  // namespace rcav
