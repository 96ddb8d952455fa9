#include "rcav/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "rcav/errors.hpp"
#include "rcav/kernels.hpp"

namespace rcav {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul expects 2-d tensors");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  kernels::gemm_acc(a.dim(0), b.dim(1), a.dim(1), a.data().data(), b.data().data(), c.data().data());
  c.check_finite("matmul");
  return c;
}

namespace {

void softmax_into(std::span<const float> logits, std::span<float> out) {
  const float mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (float z : logits) total += std::exp(static_cast<double>(z) - mx);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = static_cast<float>(std::exp(static_cast<double>(logits[i]) - mx) / total);
  }
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1) throw DimensionError("softmax expects a 1-d tensor");
  Tensor out(logits.shape());
  softmax_into(logits.data(), out.data());
  out.check_finite("softmax");
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax_rows expects a 2-d tensor");
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < logits.dim(0); ++r) softmax_into(logits.row(r), out.row(r));
  out.check_finite("softmax_rows");
  return out;
}

double softmax_probability(std::span<const float> logits, std::size_t k) {
  if (logits.empty()) throw DimensionError("softmax of empty logits");
  if (k >= logits.size()) throw IndexError("class index out of range");
  const float mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (float z : logits) total += std::exp(static_cast<double>(z) - mx);
  return std::exp(static_cast<double>(logits[k]) - mx) / total;
}

double frobenius_norm(const Tensor& m) { return std::sqrt(kernels::sum_squares(m.data().data(), m.size())); }

Rank1Decomposition rank1_svd(const Tensor& m, const PowerIterationOptions& opts) {
  if (m.rank() != 2) throw DimensionError("rank1_svd expects a 2-d tensor");
  if (opts.max_iter < 1) throw ConfigError("rank1_svd needs max_iter >= 1");
  if (frobenius_norm(m) == 0.0) throw DegenerateError("rank1_svd of a zero matrix");
  const std::size_t rows = m.dim(0);
  const std::size_t cols = m.dim(1);
  std::vector<double> a(m.data().begin(), m.data().end());

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(cols), u(rows), w(cols);
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    s = std::sqrt(s);
    for (double& e : x) e /= s;
    return s;
  };
  auto apply = [&](const std::vector<double>& in) {
    for (std::size_t i = 0; i < rows; ++i) {
      double acc = 0.0;
      const double* ai = a.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) acc += ai[j] * in[j];
      u[i] = acc;
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      const double* ai = a.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) w[j] += ai[j] * u[i];
    }
  };

  // A random start can land in the null space only with probability zero,
  // but retry a few seeds so a rank-deficient input cannot stall us.
  double norm_w = 0.0;
  for (int attempt = 0; attempt < 8 && norm_w == 0.0; ++attempt) {
    for (double& e : v) e = normal(rng);
    normalize(v);
    apply(v);
    double s = 0.0;
    for (double e : w) s += e * e;
    norm_w = std::sqrt(s);
  }
  if (norm_w == 0.0) throw DegenerateError("rank1_svd: power iteration collapsed to zero");

  Rank1Decomposition out;
  double rayleigh_prev = 0.0;
  for (std::size_t it = 1; it <= opts.max_iter; ++it) {
    out.iterations = it;
    double rayleigh = 0.0;
    for (std::size_t j = 0; j < cols; ++j) rayleigh += v[j] * w[j];
    std::vector<double> next = w;
    normalize(next);
    double delta = 0.0;
    for (std::size_t j = 0; j < cols; ++j) delta += (next[j] - v[j]) * (next[j] - v[j]);
    v.swap(next);
    const bool rq_settled = it > 1 && std::abs(rayleigh - rayleigh_prev) <= opts.tol * std::abs(rayleigh);
    if (rq_settled && std::sqrt(delta) <= opts.tol) {
      out.converged = true;
      break;
    }
    rayleigh_prev = rayleigh;
    apply(v);
  }

  // Final left vector and sigma from the last right iterate.
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    const double* ai = a.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) acc += ai[j] * v[j];
    u[i] = acc;
  }
  const double sigma = normalize(u);

  std::size_t pivot = 0;
  for (std::size_t j = 1; j < cols; ++j) {
    if (std::abs(v[j]) > std::abs(v[pivot])) pivot = j;
  }
  const double sign = v[pivot] < 0 ? -1.0 : 1.0;
  for (double& e : u) e *= sign;
  for (double& e : v) e *= sign;
  out.left_vector = std::move(u);
  out.right_vector = std::move(v);
  out.singular_value = sigma;
  return out;
}

Tensor reconstruct(const Rank1Decomposition& r) {
  const std::size_t rows = r.left_vector.size();
  const std::size_t cols = r.right_vector.size();
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      out.at(i, j) = static_cast<float>(r.singular_value * r.left_vector[i] * r.right_vector[j]);
    }
  }
  return out;
}

double rank1_residual_norm(const Tensor& m, const Rank1Decomposition& r) {
  const std::size_t rows = r.left_vector.size();
  const std::size_t cols = r.right_vector.size();
  if (m.rank() != 2 || m.dim(0) != rows || m.dim(1) != cols) throw DimensionError("rank1_residual_norm shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double su = r.singular_value * r.left_vector[i];
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = static_cast<double>(m.at(i, j)) - su * r.right_vector[j];
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

}  // namespace rcav
