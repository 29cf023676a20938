#include "hsam/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hsam {

std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {
  for (auto d : shape_) {
    if (d < 0) throw std::invalid_argument("tensor: negative dim in " + shape_str(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape_) + " does not match data length " +
                                std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::runtime_error("tensor: item() on tensor of " + std::to_string(numel()) + " elements");
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void TensorView::assign(const Tensor& t) {
  if (t.numel() != numel()) {
    throw std::invalid_argument("view assign: size mismatch " + shape_str(t.shape()) + " vs " + shape_str(shape));
  }
  std::copy(t.data(), t.data() + t.numel(), data.begin());
}

namespace ops {
namespace {

// Broadcast classification for binary elementwise ops.
enum class Bcast { same, lhs_scalar, rhs_scalar, rhs_trailing };

Bcast classify(const Tensor& a, const Tensor& b, const char* opname) {
  if (a.shape() == b.shape()) return Bcast::same;
  if (b.numel() == 1) return Bcast::rhs_scalar;
  if (a.numel() == 1) return Bcast::lhs_scalar;
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() < sa.size() &&
      std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()))) {
    return Bcast::rhs_trailing;
  }
  throw std::invalid_argument(std::string(opname) + ": incompatible shapes " + shape_str(sa) + " and " +
                              shape_str(sb));
}

template <typename F>
Tensor binary(const Tensor& a, const Tensor& b, const char* opname, F f) {
  switch (classify(a, b, opname)) {
    case Bcast::same: {
      Tensor out(a.shape());
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
      return out;
    }
    case Bcast::rhs_scalar: {
      Tensor out(a.shape());
      const double s = b[0];
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], s);
      return out;
    }
    case Bcast::lhs_scalar: {
      Tensor out(b.shape());
      const double s = a[0];
      for (std::int64_t i = 0; i < b.numel(); ++i) out[i] = f(s, b[i]);
      return out;
    }
    case Bcast::rhs_trailing: {
      Tensor out(a.shape());
      const std::int64_t inner = b.numel();
      for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i % inner]);
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

template <typename F>
Tensor unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (std::int64_t i = 0; i < b.numel(); ++i) {
    if (b[i] == 0.0) throw std::domain_error("div: zero denominator entry at index " + std::to_string(i));
  }
  return binary(a, b, "div", [](double x, double y) { return x / y; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: inner dims differ, " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  if (m && k && n) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), 1.0, a.data(), static_cast<int>(k), b.data(), static_cast<int>(n), 0.0,
                out.data(), static_cast<int>(n));
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i];
  return Tensor::scalar(s);
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  return Tensor::scalar(sum(a).item() / static_cast<double>(a.numel()));
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor sin(const Tensor& a) {
  return unary(a, [](double x) { return std::sin(x); });
}

Tensor cos(const Tensor& a) {
  return unary(a, [](double x) { return std::cos(x); });
}

Tensor pow(const Tensor& a, double exponent) {
  const bool integral = exponent == std::floor(exponent);
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    if (a[i] < 0.0 && !integral) {
      throw std::domain_error("pow: negative base with non-integer exponent");
    }
    if (a[i] == 0.0 && exponent < 0.0) {
      throw std::domain_error("pow: zero base with negative exponent");
    }
  }
  return unary(a, [exponent](double x) { return std::pow(x, exponent); });
}

Tensor concat(std::span<const Tensor* const> xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = xs[0]->shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size())) {
    throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(s0));
  }
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const Tensor* t : xs) {
    if (t->rank() != static_cast<int>(s0.size())) {
      throw std::invalid_argument("concat: rank mismatch " + shape_str(t->shape()) + " vs " + shape_str(s0));
    }
    for (int d = 0; d < t->rank(); ++d) {
      if (d != axis && t->dim(d) != s0[static_cast<std::size_t>(d)]) {
        throw std::invalid_argument("concat: shape mismatch " + shape_str(t->shape()) + " vs " + shape_str(s0));
      }
    }
    out_shape[static_cast<std::size_t>(axis)] += t->dim(axis);
  }
  Tensor out(out_shape);
  // outer = product of dims before axis, inner = product after.
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[static_cast<std::size_t>(d)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s0.size(); ++d) inner *= s0[d];
  const std::int64_t out_axis = out_shape[static_cast<std::size_t>(axis)];
  std::int64_t dst_off = 0;
  for (const Tensor* t : xs) {
    const std::int64_t ax = t->dim(axis);
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* src = t->data() + o * ax * inner;
      double* dst = out.data() + (o * out_axis + dst_off) * inner;
      std::copy(src, src + ax * inner, dst);
    }
    dst_off += ax;
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return Tensor(std::move(shape), a.vec());
}

Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t len) {
  if (axis < 0 || axis >= a.rank()) {
    throw std::invalid_argument("slice: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(a.shape()));
  }
  const std::int64_t ax = a.dim(axis);
  if (start < 0 || len < 0 || start + len > ax) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                ") out of bounds for axis size " + std::to_string(ax));
  }
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.dim(d);
  for (int d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  Tensor out(out_shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    const double* src = a.data() + (o * ax + start) * inner;
    std::copy(src, src + len * inner, out.data() + o * len * inner);
  }
  return out;
}

Tensor squared_norm(const Tensor& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i] * a[i];
  return Tensor::scalar(s);
}

Tensor scale(const Tensor& a, double c) {
  return unary(a, [c](double x) { return c * x; });
}

namespace {

// Mirror an out-of-range coordinate for reflect padding (edge excluded).
inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, PadMode pad) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw std::invalid_argument("conv2d: expects x[b,c,h,w] and w[oc,ic,kh,kw], got " + shape_str(x.shape()) +
                                " and " + shape_str(w.shape()));
  }
  const std::int64_t b = x.dim(0), ic = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::int64_t oc = w.dim(0), kic = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (ic != kic) {
    throw std::invalid_argument("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
  if (h < kh || wd < kw) {
    throw std::invalid_argument("conv2d: spatial size " + shape_str(x.shape()) + " smaller than kernel " +
                                shape_str(w.shape()));
  }
  if (bias && bias->numel() != oc) {
    throw std::invalid_argument("conv2d: bias length " + std::to_string(bias->numel()) + " != out channels " +
                                std::to_string(oc));
  }
  const std::int64_t ph = kh / 2, pw = kw / 2;
  Tensor out({b, oc, h, wd});
  for (std::int64_t n = 0; n < b; ++n) {
    for (std::int64_t o = 0; o < oc; ++o) {
      double* dst = out.data() + (n * oc + o) * h * wd;
      if (bias) {
        const double bv = (*bias)[o];
        for (std::int64_t i = 0; i < h * wd; ++i) dst[i] = bv;
      }
      for (std::int64_t c = 0; c < ic; ++c) {
        const double* src = x.data() + (n * ic + c) * h * wd;
        const double* ker = w.data() + (o * ic + c) * kh * kw;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const double kv = ker[ky * kw + kx];
            if (kv == 0.0) continue;
            const std::int64_t dy = ky - ph, dx = kx - pw;
            for (std::int64_t y = 0; y < h; ++y) {
              std::int64_t sy = y + dy;
              if (sy < 0 || sy >= h) {
                if (pad == PadMode::zero) continue;
                sy = reflect_index(sy, h);
              }
              const double* srow = src + sy * wd;
              double* drow = dst + y * wd;
              // interior columns are contiguous; handle edges separately
              const std::int64_t x_lo = std::max<std::int64_t>(0, -dx);
              const std::int64_t x_hi = std::min<std::int64_t>(wd, wd - dx);
              if (pad == PadMode::zero) {
                for (std::int64_t xx = x_lo; xx < x_hi; ++xx) drow[xx] += kv * srow[xx + dx];
              } else {
                for (std::int64_t xx = 0; xx < x_lo; ++xx) drow[xx] += kv * srow[reflect_index(xx + dx, wd)];
                for (std::int64_t xx = x_lo; xx < x_hi; ++xx) drow[xx] += kv * srow[xx + dx];
                for (std::int64_t xx = x_hi; xx < wd; ++xx) drow[xx] += kv * srow[reflect_index(xx + dx, wd)];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

namespace {

inline std::int64_t clamp_index(std::int64_t i, std::int64_t n) {
  if (i < 0) return 0;
  if (i >= n) return n - 1;
  return i;
}

void check_stencil_input(const Tensor& f) {
  if (f.rank() != 4 || f.dim(2) != f.dim(3)) {
    throw std::invalid_argument("laplacian5: expects [batch, ch, d, d], got " + shape_str(f.shape()));
  }
  if (f.dim(2) < 3) throw std::invalid_argument("laplacian5: grid must be at least 3x3");
}

// Gather (forward) or transpose-scatter (adjoint) of the five-point stencil.
// Neumann boundaries use mirrored ghost cells equal to the edge cell.
template <bool Adjoint>
void stencil_apply(const Tensor& in, Tensor& out, double h, Boundary bc) {
  const std::int64_t b = in.dim(0), c = in.dim(1), d = in.dim(2);
  const double ih2 = 1.0 / (h * h);
  for (std::int64_t n = 0; n < b * c; ++n) {
    const double* src = in.data() + n * d * d;
    double* dst = out.data() + n * d * d;
    for (std::int64_t y = 0; y < d; ++y) {
      for (std::int64_t x = 0; x < d; ++x) {
        std::int64_t yp, ym, xp, xm;
        if (bc == Boundary::periodic) {
          yp = (y + 1) % d;
          ym = (y + d - 1) % d;
          xp = (x + 1) % d;
          xm = (x + d - 1) % d;
        } else {
          yp = clamp_index(y + 1, d);
          ym = clamp_index(y - 1, d);
          xp = clamp_index(x + 1, d);
          xm = clamp_index(x - 1, d);
        }
        if constexpr (!Adjoint) {
          dst[y * d + x] = (src[yp * d + x] + src[ym * d + x] + src[y * d + xp] + src[y * d + xm] -
                            4.0 * src[y * d + x]) * ih2;
        } else {
          const double g = src[y * d + x] * ih2;
          dst[yp * d + x] += g;
          dst[ym * d + x] += g;
          dst[y * d + xp] += g;
          dst[y * d + xm] += g;
          dst[y * d + x] -= 4.0 * g;
        }
      }
    }
  }
}

}  // namespace

Tensor laplacian5(const Tensor& f, double h, Boundary bc) {
  check_stencil_input(f);
  Tensor out(f.shape());
  stencil_apply<false>(f, out, h, bc);
  return out;
}

Tensor laplacian5_adjoint(const Tensor& g, double h, Boundary bc) {
  check_stencil_input(g);
  Tensor out(g.shape());
  stencil_apply<true>(g, out, h, bc);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace ops
}  // namespace hsam
