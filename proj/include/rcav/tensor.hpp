#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rcav {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major float32 array. Every value is finite; constructors and the
// public numeric operations reject NaN/Inf with NumericError.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, float value);
  static Tensor vector(std::vector<float> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<float> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  // 2-d element access.
  float at(std::size_t row, std::size_t col) const;
  float& at(std::size_t row, std::size_t col);

  // Row `i` of the tensor viewed as [dim(0), size()/dim(0)].
  std::span<const float> row(std::size_t i) const;
  std::span<float> row(std::size_t i);
  std::size_t row_size() const;

  Tensor reshaped(Shape shape) const;
  // Rows [begin, end) along axis 0.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;

  // Throws NumericError naming `where` if any value is NaN or Inf.
  void check_finite(std::string_view where) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Elementwise helpers used by the numeric modules.
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator*(float s, const Tensor& a);

// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
// Concatenates along axis 0; trailing dims must agree.
Tensor concat_rows(std::span<const Tensor> parts);

}  // namespace rcav
