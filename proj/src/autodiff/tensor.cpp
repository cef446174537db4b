#include "posthoc/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "posthoc/core/error.hpp"

namespace posthoc::ad {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
  require(rank() <= 2, "tensor rank > 2 not supported: " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  require(rank() <= 2, "tensor rank > 2 not supported: " + shape_string(shape_));
  require(shape_size(shape_) == data_.size(), "tensor shape " + shape_string(shape_) + " does not match " +
                                                  std::to_string(data_.size()) + " values");
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, fill));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<std::vector<double>> v;
  for (const auto& r : rows) v.emplace_back(r);
  return from_rows(v);
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  const std::size_t c = n ? rows.front().size() : 0;
  std::vector<double> data;
  data.reserve(n * c);
  for (const auto& r : rows) {
    require(r.size() == c, "ragged rows in Tensor::from_rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({n, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  return 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  return 1;
}

std::span<double> Tensor::row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

double Tensor::item() const {
  require(data_.size() == 1, "item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
  }
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ContractViolation("matmul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* o = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* br = &b.data()[p * n];
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
  }
  if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]) {
    Tensor out(a.shape());
    const std::size_t c = a.cols();
    for (std::size_t r = 0; r < a.rows(); ++r)
      for (std::size_t j = 0; j < c; ++j) out(r, j) = a(r, j) + b[j];
    return out;
  }
  throw ContractViolation("add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double v) { return s * v; });
}

// relu'(0) is taken as 0.
Tensor relu(const Tensor& a) {
  return map(a, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor exp(const Tensor& a) {
  return map(a, [](double v) { return std::exp(v); });
}

Tensor log(const Tensor& a) {
  return map(a, [](double v) { return std::log(v); });
}

Tensor log_softmax_rows(const Tensor& a) {
  require(a.rank() == 2, "log_softmax_rows: expected a matrix, got " + shape_string(a.shape()));
  Tensor out(a.shape());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto in = a.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (double v : in) z += std::exp(v - mx);
    const double lz = std::log(z);
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = (in[j] - mx) - lz;
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) { return exp(log_softmax_rows(a)); }

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  require(a.rank() == 2, "gather_rows: expected a matrix, got " + shape_string(a.shape()));
  if (index.size() != a.rows()) {
    throw ContractViolation("gather_rows: shape mismatch " + shape_string(a.shape()) + " vs index [" +
                            std::to_string(index.size()) + "]");
  }
  Tensor out({a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    require(index[r] < a.cols(), "gather_rows: index " + std::to_string(index[r]) + " out of range");
    out[r] = a(r, index[r]);
  }
  return out;
}

Tensor take_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require(a.rank() == 2, "take_rows: expected a matrix, got " + shape_string(a.shape()));
  const std::size_t c = a.cols();
  Tensor out = Tensor::matrix(rows.size(), c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < a.rows(), "take_rows: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(a.row(rows[i]).begin(), c, out.row(i).begin());
  }
  return out;
}

}  // namespace posthoc::ad
