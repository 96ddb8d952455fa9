#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rcav/tensor.hpp"

namespace rcav {

// Standard 2-d product; per-element accumulation order is fixed.
Tensor matmul(const Tensor& a, const Tensor& b);

// Max-subtracted softmax of a 1-d tensor, evaluated in double.
Tensor softmax(const Tensor& logits);
// Row-wise softmax of a [rows, classes] tensor.
Tensor softmax_rows(const Tensor& logits);
// Probability of class k under softmax(logits), in double.
double softmax_probability(std::span<const float> logits, std::size_t k);

double frobenius_norm(const Tensor& m);

struct Rank1Decomposition {
  std::vector<double> left_vector;   // unit, length rows
  std::vector<double> right_vector;  // unit, length cols
  double singular_value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;  // false: max_iter reached, result is the last iterate
};

struct PowerIterationOptions {
  std::size_t max_iter = 1000;
  double tol = 1e-7;
  std::uint64_t seed = 0;
};

// Top singular triple by power iteration on m^T m. Throws DegenerateError on a
// zero matrix. The right vector's largest-magnitude entry is made positive.
Rank1Decomposition rank1_svd(const Tensor& m, const PowerIterationOptions& opts = {});

// sigma * u v^T
Tensor reconstruct(const Rank1Decomposition& r);

// ||m - sigma u v^T||_F evaluated in double without materialising the product.
double rank1_residual_norm(const Tensor& m, const Rank1Decomposition& r);

}  // namespace rcav
