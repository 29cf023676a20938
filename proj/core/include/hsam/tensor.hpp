// Dense row-major tensors of 64-bit floats plus the eager kernels behind
// every differentiable primitive.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hsam {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor full(Shape shape, double v);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Value of a one-element tensor.
  double item() const;

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Write-through view of a contiguous block of another tensor's storage.
struct TensorView {
  std::span<double> data;
  Shape shape;

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  Tensor to_tensor() const { return Tensor(shape, {data.begin(), data.end()}); }
  void assign(const Tensor& t);
};

enum class PadMode { zero, reflect };
enum class Boundary { neumann, periodic };

// Eager kernels. Binary elementwise ops accept equal shapes, a one-element
// operand on either side, or a right operand whose shape equals the left
// operand's trailing dimensions (leading-batch broadcast).
namespace ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // errors on exact zero denominator
Tensor matmul(const Tensor& a, const Tensor& b);  // rank-2 only
Tensor sum(const Tensor& a);    // scalar
Tensor mean(const Tensor& a);   // scalar
Tensor relu(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor concat(std::span<const Tensor* const> xs, int axis);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t len);
Tensor squared_norm(const Tensor& a);  // scalar sum of squares
Tensor scale(const Tensor& a, double c);

// Same-size 2-D convolution, stride 1, padding kernel/2. bias may be null.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, PadMode pad);

// Five-point-stencil Laplacian on [batch, ch, d, d] with spacing h;
// laplacian5_adjoint applies the exact transpose of the stencil operator.
Tensor laplacian5(const Tensor& f, double h, Boundary bc);
Tensor laplacian5_adjoint(const Tensor& g, double h, Boundary bc);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace ops

}  // namespace hsam
