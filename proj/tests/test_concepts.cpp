#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "rcav/concepts.hpp"
#include "rcav/errors.hpp"
#include "rcav/hypothesis.hpp"

using namespace rcav;

namespace {

// Two Gaussian clouds in `dim` dimensions, centred at +-shift on axis 0.
ConceptActivations clouds(std::size_t per_label, std::size_t dim, double shift, std::uint64_t seed) {
  auto g = oracle::gaussian(2 * per_label * dim, seed);
  ConceptActivations a;
  a.layer = "toy";
  a.concept_name = "plus";
  a.features = Tensor({2 * per_label, dim});
  for (std::size_t i = 0; i < 2 * per_label; ++i) {
    const int label = i < per_label ? 1 : 0;
    a.labels.push_back(label);
    for (std::size_t j = 0; j < dim; ++j) {
      a.features.at(i, j) = static_cast<float>(g[i * dim + j] + (j == 0 ? (label ? shift : -shift) : 0.0));
    }
  }
  return a;
}

ConceptSet make_set(std::size_t per_class_a, std::size_t per_class_b, ConceptSetLimits limits = {}) {
  auto block = [](std::size_t per_class, std::uint64_t seed) {
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 2 * per_class; ++i) labels.push_back(i % 2);
    return std::pair{oracle::random_tensor({2 * per_class, 1, 4, 4}, seed, 0.0f, 1.0f), labels};
  };
  auto [a, la] = block(per_class_a, 1);
  auto [b, lb] = block(per_class_b, 2);
  return ConceptSet({"a", "b"}, {a, b}, {la, lb}, 0, 2, limits);
}

// Newton's method on mean log-loss + l2/2 |w|^2 (bias unpenalised), in double.
std::vector<double> newton_logistic(const ConceptActivations& a, double l2) {
  const std::size_t n = a.features.dim(0), d = a.features.dim(1), p = d + 1;
  std::vector<double> w(p, 0.0);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> g(p, 0.0);
    oracle::Mat h(p, std::vector<double>(p, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(p, 1.0);
      for (std::size_t j = 0; j < d; ++j) x[j] = a.features.at(i, j);
      double z = 0;
      for (std::size_t j = 0; j < p; ++j) z += w[j] * x[j];
      const double s = 1 / (1 + std::exp(-z));
      for (std::size_t j = 0; j < p; ++j) {
        g[j] += (s - a.labels[i]) * x[j] / double(n);
        for (std::size_t k = 0; k < p; ++k) h[j][k] += s * (1 - s) * x[j] * x[k] / double(n);
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      g[j] += l2 * w[j];
      h[j][j] += l2;
    }
    // Solve h * step = g by Gaussian elimination.
    for (std::size_t c = 0; c < p; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < p; ++r)
        if (std::abs(h[r][c]) > std::abs(h[piv][c])) piv = r;
      std::swap(h[c], h[piv]);
      std::swap(g[c], g[piv]);
      for (std::size_t r = c + 1; r < p; ++r) {
        const double f = h[r][c] / h[c][c];
        for (std::size_t k = c; k < p; ++k) h[r][k] -= f * h[c][k];
        g[r] -= f * g[c];
      }
    }
    std::vector<double> step(p);
    for (std::size_t c = p; c-- > 0;) {
      double s = g[c];
      for (std::size_t k = c + 1; k < p; ++k) s -= h[c][k] * step[k];
      step[c] = s / h[c][c];
    }
    for (std::size_t j = 0; j < p; ++j) w[j] -= step[j];
  }
  return w;
}

}  // namespace

TEST(ConceptSet, Validation) {
  EXPECT_NO_THROW(make_set(50, 50));
  EXPECT_THROW(make_set(20, 50), DataError);     // 40 samples < floor
  EXPECT_THROW(make_set(50, 160), DataError);    // 320 samples > ceiling
  EXPECT_EQ(make_set(25, 25).warnings().size(), 2u);
  EXPECT_TRUE(make_set(50, 50).warnings().empty());

  auto t = oracle::random_tensor({60, 1, 4, 4}, 3);
  std::vector<std::size_t> unbalanced(60, 0);
  std::fill(unbalanced.begin(), unbalanced.begin() + 20, 1);
  std::vector<std::size_t> balanced;
  for (std::size_t i = 0; i < 60; ++i) balanced.push_back(i % 2);
  EXPECT_THROW(ConceptSet({"a", "b"}, {t, t}, {unbalanced, balanced}, 0, 2), DataError);
  EXPECT_THROW(ConceptSet({"a"}, {t}, {balanced}, 0, 2), DataError);
  auto other = oracle::random_tensor({60, 1, 5, 5}, 4);
  EXPECT_THROW(ConceptSet({"a", "b"}, {t, other}, {balanced, balanced}, 0, 2), DimensionError);
}

TEST(ConceptSet, PooledLayout) {
  auto cs = make_set(30, 40, {.floor = 10});
  EXPECT_EQ(cs.pooled_images().dim(0), 140u);
  auto y = cs.binary_labels();
  EXPECT_EQ(std::count(y.begin(), y.end(), 1), 60);
  EXPECT_TRUE(std::all_of(y.begin(), y.begin() + 60, [](int v) { return v == 1; }));
}

TEST(ConceptSet, ByStatisticPicksExtremes) {
  Dataset d;
  const std::size_t n = 200;
  d.images = oracle::random_tensor({n, 1, 2, 2}, 5, 0.0f, 1.0f);
  std::vector<double> stat;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels.push_back(i % 2);
    stat.push_back(double(i));
  }
  auto cs = concept_set_by_statistic(d, stat, 50, "high", "low");
  EXPECT_EQ(cs.samples(0).dim(0), 100u);
  // Highest of each class are the last 100 images.
  for (std::size_t r = 0; r < 100; ++r) {
    const auto row = cs.samples(0).row(r);
    bool found = false;
    for (std::size_t i = 100; i < n && !found; ++i) found = std::equal(row.begin(), row.end(), d.images.row(i).begin());
    EXPECT_TRUE(found);
  }
}

TEST(Logistic, MatchesNewtonOptimum) {
  auto a = clouds(100, 3, 0.5, 7);
  LogisticConfig cfg;
  cfg.holdout_fraction = 0.0;
  cfg.l2 = 1e-2;
  cfg.max_iter = 20000;
  cfg.grad_tol = 1e-7;
  auto fit = fit_logistic(a.features, a.labels, 1, cfg);
  EXPECT_TRUE(fit.converged);
  auto w = newton_logistic(a, cfg.l2);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(fit.weights[j], w[j], 1e-4);
  EXPECT_NEAR(fit.bias, w[3], 1e-4);
}

TEST(Logistic, Errors) {
  auto a = clouds(10, 2, 1.0, 1);
  std::vector<int> short_labels(5, 0);
  EXPECT_THROW(fit_logistic(a.features, short_labels, 1), DataError);
  LogisticConfig bad;
  bad.learning_rate = 0;
  EXPECT_THROW(fit_logistic(a.features, a.labels, 1, bad), ConfigError);
  bad = {};
  bad.holdout_fraction = 1.0;
  EXPECT_THROW(fit_logistic(a.features, a.labels, 1, bad), ConfigError);
}

TEST(Cav, PointsFromNegativeToPositiveCentroid) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto a = clouds(60, 8, 3.0, seed);
    auto cav = fit_cav(a, seed);
    std::vector<double> diff(8, 0.0);
    for (std::size_t i = 0; i < a.labels.size(); ++i)
      for (std::size_t j = 0; j < 8; ++j) diff[j] += (a.labels[i] ? 1.0 : -1.0) * a.features.at(i, j);
    double dot = 0;
    for (std::size_t j = 0; j < 8; ++j) dot += diff[j] * cav.vector[j];
    EXPECT_GT(dot, 0.0);
    EXPECT_GE(cav.heldout_accuracy, 0.9);
  }
}

TEST(Cav, SingleLabelRejected) {
  auto a = clouds(10, 2, 1.0, 1);
  std::fill(a.labels.begin(), a.labels.end(), 1);
  EXPECT_THROW(fit_cav(a, 1), DataError);
}

TEST(Cav, SaveLoadRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "rcav_cav_io";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto cav = fit_cav(clouds(30, 5, 1.0, 2), 9);
  save_cav(cav, dir, "toy");
  auto back = load_cav(dir, "toy");
  EXPECT_EQ(back.vector, cav.vector);
  EXPECT_EQ(back.bias, cav.bias);
  EXPECT_EQ(back.layer, cav.layer);
  EXPECT_EQ(back.seed, cav.seed);
  EXPECT_EQ(back.heldout_accuracy, cav.heldout_accuracy);
  std::filesystem::remove_all(dir);
}

TEST(Bootstrap, KeepsLabelCountsAndVaries) {
  auto a = clouds(40, 4, 1.0, 3);
  auto b1 = bootstrap_cav(a, 1), b2 = bootstrap_cav(a, 2);
  EXPECT_NE(b1.vector, b2.vector);
  EXPECT_EQ(bootstrap_cav(a, 1).vector, b1.vector);
}

TEST(PermutationNull, ChanceLevelAccuracy) {
  auto a = clouds(300, 4, 2.0, 11);
  double mean = 0;
  for (std::size_t seed = 0; seed < 20; ++seed) {
    const double acc = permutation_null(a, 1000, seed).heldout_accuracy;
    EXPECT_NEAR(acc, 0.5, 0.15) << "seed " << seed;
    mean += acc / 20;
  }
  EXPECT_NEAR(mean, 0.5, 0.05);
}

TEST(PermutationNull, DeterministicAndEmpty) {
  auto a = clouds(30, 4, 1.0, 12);
  auto n1 = permutation_nulls(a, 5, 77), n2 = permutation_nulls(a, 5, 77);
  ASSERT_EQ(n1.vectors.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(n1.vectors[i], n2.vectors[i]);
  EXPECT_EQ(permutation_null(a, 77, 3).vector, n1.vectors[3]);

  auto empty = permutation_nulls(a, 0, 77);
  EXPECT_TRUE(empty.vectors.empty());
  EXPECT_THROW(permutation_test(0.1, empty.scores, PermutationTestConfig{}), DataError);
}

TEST(UniformSphere, UnitNormAndIsotropy) {
  auto nulls = uniform_sphere_nulls(64, 10000, 5);
  std::vector<double> mean(64, 0.0);
  for (const auto& v : nulls.vectors) {
    double ss = 0;
    for (float x : v.data()) ss += double(x) * x;
    EXPECT_NEAR(std::sqrt(ss), 1.0, 1e-5);
    for (std::size_t j = 0; j < 64; ++j) mean[j] += v[j] / 10000.0;
  }
  double mn = 0;
  for (double m : mean) mn += m * m;
  EXPECT_LE(std::sqrt(mn), 0.05);
  EXPECT_EQ(uniform_sphere_vector(64, 5, 17), nulls.vectors[17]);
}

TEST(UniformSphere, NearOrthogonalInHighDimension) {
  auto nulls = uniform_sphere_nulls(256, 200, 9);
  std::vector<double> cosines;
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t j = i + 1; j < 200; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < 256; ++k) d += double(nulls.vectors[i][k]) * nulls.vectors[j][k];
      cosines.push_back(std::abs(d));
    }
  std::nth_element(cosines.begin(), cosines.begin() + cosines.size() / 2, cosines.end());
  EXPECT_LE(cosines[cosines.size() / 2], 0.2);
}
