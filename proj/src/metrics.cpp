#include "rcav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rcav/errors.hpp"
#include "rcav/sensitivity.hpp"
#include "rcav/tensor_io.hpp"

namespace rcav {

void MetricsConfig::validate() const {
  if (!(binarize_percentile > 0.0 && binarize_percentile < 100.0)) throw ConfigError("percentile must lie in (0,100)");
  if (tau_permutations == 0) throw ConfigError("tau_permutations must be at least 1");
}

namespace {

void same_length(std::span<const double> a, std::size_t b, const char* what) {
  if (a.size() != b) {
    throw DataError(std::string(what) + ": lengths differ (" + std::to_string(a.size()) + " vs " + std::to_string(b) + ")");
  }
}

// Counts inversions of v while merge-sorting it.
std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

// Sum of t(t-1)/2 over runs of equal values in a sorted sequence.
template <class Eq>
std::uint64_t tie_pairs(std::size_t n, Eq eq) {
  std::uint64_t total = 0, run = 1;
  for (std::size_t i = 1; i < n; ++i) {
    if (eq(i - 1, i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total + run * (run - 1) / 2;
}

void check_binary(std::span<const double> scores, std::span<const int> labels, std::size_t& pos, std::size_t& neg) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  pos = neg = 0;
  for (int l : labels) {
    if (l == 1) {
      ++pos;
    } else if (l == 0) {
      ++neg;
    } else {
      throw DataError("labels must be 0 or 1");
    }
  }
  if (pos == 0 || neg == 0) throw DegenerateError("AUROC/AUPRC need both classes present");
}

std::vector<std::size_t> order_desc(std::span<const double> scores) {
  std::vector<std::size_t> o(scores.size());
  std::iota(o.begin(), o.end(), std::size_t{0});
  std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return o;
}

}  // namespace

double p_tau(std::span<const double> pred, std::span<const double> truth) {
  same_length(pred, truth.size(), "p_tau");
  const std::size_t n = pred.size();
  if (n < 2) throw DataError("p_tau needs at least two samples");
  std::uint64_t agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      agree += ((pred[i] >= pred[j]) == (truth[i] >= truth[j])) ? 1 : 0;
    }
  }
  const auto pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  return static_cast<double>(agree) / static_cast<double>(pairs);
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  same_length(x, y.size(), "kendall_tau_b");
  const std::size_t n = x.size();
  if (n < 2) throw DataError("kendall tau needs at least two samples");
  std::vector<std::size_t> o(n);
  std::iota(o.begin(), o.end(), std::size_t{0});
  std::sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]); });
  const auto n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const auto n1 = tie_pairs(n, [&](std::size_t a, std::size_t b) { return x[o[a]] == x[o[b]]; });
  const auto n3 = tie_pairs(n, [&](std::size_t a, std::size_t b) { return x[o[a]] == x[o[b]] && y[o[a]] == y[o[b]]; });
  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[o[i]];
  const auto swaps = merge_count(ys, buf, 0, n);
  const auto n2 = tie_pairs(n, [&](std::size_t a, std::size_t b) { return ys[a] == ys[b]; });
  if (n1 == n0 || n2 == n0) throw DegenerateError("kendall tau is undefined for a constant input");
  // concordant - discordant = n0 - n1 - n2 + n3 - 2 * swaps
  const auto numer = static_cast<double>(static_cast<std::int64_t>(n0 - n1 - n2 + n3) - 2 * static_cast<std::int64_t>(swaps));
  return numer / std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
}

KendallResult kendall_tau_perm(std::span<const double> pred, std::span<const double> truth,
                               std::size_t permutations, std::uint64_t seed) {
  KendallResult r;
  r.tau = kendall_tau_b(pred, truth);
  r.permutations = permutations;
  if (permutations == 0) return r;
  std::vector<double> shuffled(truth.begin(), truth.end());
  std::mt19937_64 rng(seed);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < permutations; ++i) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (std::abs(kendall_tau_b(pred, shuffled)) >= std::abs(r.tau)) ++hits;
  }
  r.p_value = static_cast<double>(hits) / static_cast<double>(permutations);
  return r;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty list");
  if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile must lie in [0,100]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

std::vector<int> binarize_truth(std::span<const double> truth, double q, bool signed_truth) {
  if (truth.empty()) throw DataError("binarize_truth of an empty list");
  std::vector<double> v(truth.begin(), truth.end());
  if (!signed_truth) {
    for (auto& x : v) x = std::abs(x);
  }
  const double t = percentile(v, q);
  std::vector<int> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [&](double x) { return x > t ? 1 : 0; });
  return out;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  check_binary(scores, labels, pos, neg);
  std::vector<std::size_t> o(scores.size());
  std::iota(o.begin(), o.end(), std::size_t{0});
  std::sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the Mann-Whitney U, kept integral.
  std::uint64_t twice_u = 0, neg_below = 0;
  for (std::size_t i = 0; i < o.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < o.size() && scores[o[j]] == scores[o[i]]) {
      (labels[o[j]] == 1 ? gp : gn) += 1;
      ++j;
    }
    twice_u += gp * (2 * neg_below + gn);
    neg_below += gn;
    i = j;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  check_binary(scores, labels, pos, neg);
  const auto o = order_desc(scores);
  std::size_t tp = 0, fp = 0;
  double area = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < o.size();) {
    std::size_t j = i;
    while (j < o.size() && scores[o[j]] == scores[o[i]]) {
      (labels[o[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

FprReport fpr_report(std::span<const HypothesisResult> results, double threshold) {
  if (results.empty()) throw DataError("fpr_report of no runs");
  FprReport r;
  r.runs = results.size();
  for (const auto& h : results) {
    r.raw_positives += h.p_raw < threshold ? 1 : 0;
    r.adjusted_positives += h.p_adjusted < threshold ? 1 : 0;
  }
  r.raw = static_cast<double>(r.raw_positives) / static_cast<double>(r.runs);
  r.adjusted = static_cast<double>(r.adjusted_positives) / static_cast<double>(r.runs);
  return r;
}

LinearityBound linearity_bound(const Tensor& differences, const std::string& layer, const PowerIterationOptions& opts) {
  if (differences.rank() != 2 || differences.dim(0) < 2) throw DataError("linearity bound needs at least two pairs");
  const auto r1 = rank1_svd(differences, opts);
  LinearityBound b;
  b.layer = layer;
  b.n_samples = differences.dim(0);
  b.dim = differences.dim(1);
  double ss = 0.0;
  for (float v : differences.data()) ss += static_cast<double>(v) * v;
  b.frobenius = std::sqrt(ss);
  b.singular_value = r1.singular_value;
  b.converged = r1.converged;
  b.residual_fraction = std::clamp(rank1_residual_norm(differences, r1) / b.frobenius, 0.0, 1.0);
  b.explained_fraction = 1.0 - b.residual_fraction;
  return b;
}

LinearityBound svd_linearity_bound(const nn::Model& model, const Tensor& x, const Tensor& x_prime,
                                   const std::string& layer, const PowerIterationOptions& opts) {
  if (x.shape() != x_prime.shape()) throw DimensionError("pair batches differ in shape");
  if (!model.is_probe(layer)) throw LookupError("layer " + layer + " is not a probe layer");
  const Tensor a = model.forward_to(layer, x);
  const Tensor b = model.forward_to(layer, x_prime);
  const Tensor d = a - b;
  return linearity_bound(d.reshaped({d.dim(0), d.row_size()}), layer, opts);
}

void write_metrics_csv(std::span<const MetricRow> rows, const std::filesystem::path& path,
                       const std::string& config_hash) {
  std::string out = "# rcav config_hash=" + config_hash + "\n";
  out += "metric,layer,method,value,p_value,n,seed,config_hash\n";
  for (const auto& r : rows) {
    out += r.metric + "," + r.layer + "," + r.method + "," + format_double(r.value) + "," +
           (r.has_p_value ? format_double(r.p_value) : std::string()) + "," + std::to_string(r.n) + "," +
           std::to_string(r.seed) + "," + config_hash + "\n";
  }
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(out.data()), out.size()));
}

void write_plot_tsv(std::span<const double> pred, std::span<const double> truth, const std::filesystem::path& path) {
  same_length(pred, truth.size(), "plot data");
  std::string out = "pred_s\ttruth_s\n";
  for (std::size_t i = 0; i < pred.size(); ++i) out += format_double(pred[i]) + "\t" + format_double(truth[i]) + "\n";
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(out.data()), out.size()));
}

}  // namespace rcav
