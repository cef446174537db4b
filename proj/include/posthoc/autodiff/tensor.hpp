#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace posthoc::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major array of doubles. Rank 0 is a scalar, rank 1 a vector and
// rank 2 a matrix; nothing in this library needs more.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // Matrix view of the tensor: a vector counts as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;
  const std::vector<double>& values() const { return data_; }

  // Value of a single-element tensor.
  double item() const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain kernels over values. The tape records these and the inference path
// calls them directly, so both produce bitwise-identical results.
Tensor matmul(const Tensor& a, const Tensor& b);
// Same-shape addition, or a [rows, cols] matrix plus a length-cols bias.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
double sum(const Tensor& a);
// out[r] = a(r, index[r])
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
// Rows of `a` selected by `rows`, in order.
Tensor take_rows(const Tensor& a, std::span<const std::size_t> rows);

}  // namespace posthoc::ad
