#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "oracles.hpp"
#include "rcav/errors.hpp"
#include "rcav/hashing.hpp"
#include "rcav/linalg.hpp"
#include "rcav/tensor.hpp"
#include "rcav/tensor_io.hpp"

using rcav::Tensor;

TEST(Tensor, ConstructionRejectsBadShapes) {
  EXPECT_THROW(Tensor(rcav::Shape{}), rcav::DimensionError);
  EXPECT_THROW(Tensor(rcav::Shape{2, 0}), rcav::DimensionError);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), rcav::DimensionError);
}

TEST(Tensor, ConstructionRejectsNonFinite) {
  EXPECT_THROW(Tensor::vector({1.0f, std::numeric_limits<float>::quiet_NaN()}), rcav::NumericError);
  EXPECT_THROW(Tensor::vector({std::numeric_limits<float>::infinity()}), rcav::NumericError);
}

TEST(Tensor, RowsSlicesAndReshape) {
  auto t = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.row(1)[0], 3.0f);
  EXPECT_EQ(t.slice_rows(1, 3), Tensor::matrix(2, 2, {3, 4, 5, 6}));
  EXPECT_EQ(t.reshaped({6}).shape(), (rcav::Shape{6}));
  EXPECT_THROW(t.reshaped({4}), rcav::DimensionError);
  EXPECT_THROW(t.slice_rows(2, 2), rcav::DimensionError);
  EXPECT_THROW(t.dim(2), rcav::DimensionError);
}

TEST(Tensor, StackAndConcat) {
  Tensor a = Tensor::vector({1, 2}), b = Tensor::vector({3, 4});
  std::vector<Tensor> parts{a, b};
  EXPECT_EQ(rcav::stack(parts), Tensor::matrix(2, 2, {1, 2, 3, 4}));
  std::vector<Tensor> rows{Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 2, {3, 4, 5, 6})};
  EXPECT_EQ(rcav::concat_rows(rows), Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  std::vector<Tensor> bad{a, Tensor::vector({1})};
  EXPECT_THROW(rcav::stack(bad), rcav::DimensionError);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(rcav::matmul(Tensor::identity(2), m), m);
}

TEST(Matmul, Annihilation) {
  auto r = rcav::matmul(Tensor::matrix(2, 2, {1, 0, 0, 0}), Tensor::matrix(2, 1, {0, 5}));
  EXPECT_EQ(r, Tensor::matrix(2, 1, {0, 0}));
}

TEST(Matmul, MatchesTripleLoop) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto a = oracle::random_tensor({7, 5}, seed), b = oracle::random_tensor({5, 3}, seed + 100);
    auto want = oracle::matmul(oracle::to_mat(a), oracle::to_mat(b));
    auto got = rcav::matmul(a, b);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(got.at(i, j), want[i][j], 1e-5);
  }
}

TEST(Matmul, InnerDimensionMismatch) {
  EXPECT_THROW(rcav::matmul(Tensor::identity(2), Tensor::identity(3)), rcav::DimensionError);
}

TEST(Softmax, Values) {
  auto s = rcav::softmax(Tensor::vector({0, 0}));
  EXPECT_EQ(s[0], 0.5f);
  EXPECT_EQ(s[1], 0.5f);
  auto e = std::exp(1.0);
  auto t = rcav::softmax(Tensor::vector({1, 0}));
  EXPECT_NEAR(t[0], e / (e + 1), 1e-6);
  EXPECT_NEAR(t[0], 0.7311, 1e-4);
  EXPECT_NEAR(t[1], 0.2689, 1e-4);
  auto big = rcav::softmax(Tensor::vector({1000, 0}));
  EXPECT_EQ(big[0], 1.0f);
  EXPECT_EQ(big[1], 0.0f);
}

TEST(Softmax, RowsSumToOne) {
  auto logits = oracle::random_tensor({20, 7}, 3, -30.0f, 30.0f);
  auto p = rcav::softmax_rows(logits);
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0;
    for (float v : p.row(r)) {
      EXPECT_GE(v, 0.0f);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
    std::vector<double> z(logits.row(r).begin(), logits.row(r).end());
    auto want = oracle::softmax(z);
    for (std::size_t k = 0; k < 7; ++k) {
      EXPECT_NEAR(rcav::softmax_probability(logits.row(r), k), want[k], 1e-12);
    }
  }
}

TEST(Frobenius, Values) {
  EXPECT_EQ(rcav::frobenius_norm(Tensor::zeros({3, 3})), 0.0);
  EXPECT_DOUBLE_EQ(rcav::frobenius_norm(Tensor::matrix(1, 2, {3, 4})), 5.0);
  auto m = oracle::random_tensor({10, 10}, 9);
  double s = 0;
  for (float v : m.data()) s += double(v) * v;
  EXPECT_NEAR(rcav::frobenius_norm(m), std::sqrt(s), 1e-6);
}

TEST(TensorIo, RoundTripIsBitwise) {
  auto t = oracle::random_tensor({3, 4, 5}, 11, -1e6f, 1e6f);
  auto bytes = rcav::encode_tensor(t);
  ASSERT_EQ(bytes.size(), 6 + 4 * 3 + 4 * t.size());
  EXPECT_EQ(bytes[0], 'R');
  EXPECT_EQ(bytes[4], rcav::kRcvtVersion);
  EXPECT_EQ(rcav::decode_tensor(bytes), t);

  auto path = std::filesystem::temp_directory_path() / "rcav_tensor_io_test.rcvt";
  rcav::write_tensor(path, t);
  EXPECT_EQ(rcav::read_tensor(path), t);
  std::filesystem::remove(path);
}

TEST(TensorIo, RejectsCorruption) {
  auto bytes = rcav::encode_tensor(Tensor::vector({1, 2, 3}));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(rcav::decode_tensor(bad_magic), rcav::FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(rcav::decode_tensor(truncated), rcav::FormatError);
  EXPECT_THROW(rcav::read_tensor("/nonexistent/rcav.rcvt"), rcav::MissingArtifactError);
}

TEST(Hashing, KnownDigest) {
  EXPECT_EQ(rcav::sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
