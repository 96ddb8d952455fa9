#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rcav/concepts.hpp"
#include "rcav/errors.hpp"
#include "rcav/kernels.hpp"

namespace rcav {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double accuracy_on(const Tensor& x, std::span<const int> y, const std::vector<std::size_t>& rows,
                   std::span<const float> w, double b) {
  if (rows.empty()) return 0.0;
  std::size_t hit = 0;
  for (auto i : rows) {
    const double z = kernels::dot(x.row(i), w) + b;
    hit += ((z >= 0.0 ? 1 : 0) == y[i]) ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

}  // namespace

LogisticFit fit_logistic(const Tensor& x, std::span<const int> y, std::uint64_t seed, const LogisticConfig& cfg) {
  if (x.rank() != 2) throw DimensionError("fit_logistic expects [N, D] features");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (y.size() != n) throw DataError("fit_logistic: " + std::to_string(y.size()) + " labels for " + std::to_string(n) + " rows");
  if (!(cfg.learning_rate > 0.0) || cfg.max_iter == 0) throw ConfigError("logistic learning_rate and max_iter must be positive");
  if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0)) throw ConfigError("holdout_fraction must be in [0,1)");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(n)));
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  if (train.empty()) throw DataError("fit_logistic: no training rows");

  double mean_sq = 0.0;
  for (auto i : train) mean_sq += kernels::sum_squares(x.row(i)) + 1.0;
  mean_sq /= static_cast<double>(train.size());
  const double lipschitz = std::max(0.25 * mean_sq + cfg.l2, 1e-12);
  const auto step = static_cast<float>(cfg.learning_rate / lipschitz);

  LogisticFit fit;
  std::vector<float> w(d, 0.0f);
  std::vector<float> grad(d);
  double b = 0.0;
  const auto inv_n = 1.0 / static_cast<double>(train.size());
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0f);
    double gb = 0.0;
    for (auto i : train) {
      const double z = kernels::dot(x.row(i), w) + b;
      const double r = (sigmoid(z) - y[i]) * inv_n;
      kernels::axpy(static_cast<float>(r), x.row(i), grad);
      gb += r;
    }
    kernels::axpy(static_cast<float>(cfg.l2), w, grad);
    const double gnorm = std::sqrt(kernels::sum_squares(grad) + gb * gb);
    fit.iterations = it + 1;
    if (!std::isfinite(gnorm)) throw NumericError("logistic regression diverged");
    if (gnorm < cfg.grad_tol) {
      fit.converged = true;
      break;
    }
    kernels::axpy(-step, grad, w);
    b -= static_cast<double>(step) * gb;
  }
  fit.train_accuracy = accuracy_on(x, y, train, w, b);
  fit.heldout_accuracy = test.empty() ? fit.train_accuracy : accuracy_on(x, y, test, w, b);
  fit.weights = std::move(w);
  fit.bias = b;
  return fit;
}

}  // namespace rcav
