#include "rcav/tensor.hpp"

#include <cmath>
#include <sstream>

#include "rcav/errors.hpp"

namespace rcav {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                         " values, got " + std::to_string(data_.size()));
  }
  check_finite("Tensor construction");
}

Tensor Tensor::filled(Shape shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  t.check_finite("Tensor::filled");
  return t;
}

Tensor Tensor::vector(std::vector<float> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<float> values) {
  return Tensor({rows, cols}, std::vector<float>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
  }
  return shape_[axis];
}

float Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
float& Tensor::at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

std::size_t Tensor::row_size() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

std::span<const float> Tensor::row(std::size_t i) const {
  const auto n = row_size();
  return std::span<const float>(data_).subspan(i * n, n);
}

std::span<float> Tensor::row(std::size_t i) {
  const auto n = row_size();
  return std::span<float>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > dim(0)) throw DimensionError("invalid row slice");
  Shape s = shape_;
  s[0] = end - begin;
  const auto n = row_size();
  Tensor t;
  t.shape_ = std::move(s);
  t.data_.assign(data_.begin() + static_cast<std::ptrdiff_t>(begin * n),
                 data_.begin() + static_cast<std::ptrdiff_t>(end * n));
  return t;
}

void Tensor::check_finite(std::string_view where) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError(std::string(where) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("shape mismatch in subtraction");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor(a.shape(), std::move(out));
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("shape mismatch in addition");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor(a.shape(), std::move(out));
}

Tensor operator*(float s, const Tensor& a) {
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a[i];
  return Tensor(a.shape(), std::move(out));
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack of zero tensors");
  Shape s{parts.size()};
  s.insert(s.end(), parts[0].shape().begin(), parts[0].shape().end());
  std::vector<float> out;
  out.reserve(shape_size(s));
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) throw DimensionError("stack of differently shaped tensors");
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return Tensor(std::move(s), std::move(out));
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Shape s = parts[0].shape();
  std::size_t rows = 0;
  std::vector<float> out;
  for (const auto& p : parts) {
    if (p.rank() != s.size() || !std::equal(s.begin() + 1, s.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat of tensors with different trailing dims");
    }
    rows += p.dim(0);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  s[0] = rows;
  return Tensor(std::move(s), std::move(out));
}

}  // namespace rcav
