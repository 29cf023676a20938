#include <cmath>
#include <random>

#include "doctest.h"
#include "hsam/tensor.hpp"

using namespace hsam;

TEST_CASE("tensor construction and invariants") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t[5] == 0.0);
  CHECK_THROWS(Tensor({2, 2}, {1.0, 2.0, 3.0}));

  Tensor s = Tensor::scalar(4.5);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 4.5);
  CHECK_THROWS(t.item());
}

TEST_CASE("elementwise ops basics") {
  Tensor a({2}, {1.0, 2.0});
  Tensor b({2}, {3.0, 4.0});
  Tensor c = ops::add(a, b);
  CHECK(c[0] == 4.0);
  CHECK(c[1] == 6.0);

  Tensor r = ops::relu(Tensor({3}, {-1.0, 0.0, 2.0}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);

  CHECK_THROWS_WITH(ops::add(Tensor({2}), Tensor({3})), doctest::Contains("add"));
  CHECK_THROWS(ops::div(a, Tensor({2}, {1.0, 0.0})));
}

TEST_CASE("broadcast rules") {
  Tensor m({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor row({3}, {10, 20, 30});
  Tensor out = ops::add(m, row);  // leading-batch broadcast
  CHECK(out[0] == 11);
  CHECK(out[5] == 36);

  Tensor s = ops::mul(m, Tensor::scalar(2.0));
  CHECK(s[3] == 8);
  Tensor s2 = ops::mul(Tensor::scalar(2.0), m);
  CHECK(s2[3] == 8);
}

TEST_CASE("matmul identity case") {
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor a({3, 3});
  for (int i = 0; i < 9; ++i) a[i] = u(rng);
  Tensor out = ops::matmul(eye, a);
  for (int i = 0; i < 9; ++i) CHECK(out[i] == doctest::Approx(a[i]).epsilon(1e-15));
  CHECK_THROWS(ops::matmul(Tensor({2, 3}), Tensor({2, 3})));
}

TEST_CASE("reductions, slice, concat, reshape") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  CHECK(ops::sum(a).item() == 10.0);
  CHECK(ops::mean(a).item() == 2.5);
  CHECK(ops::squared_norm(a).item() == 30.0);

  Tensor s = ops::slice(a, 1, 0, 1);
  CHECK(s.shape() == Shape{2, 1});
  CHECK(s[0] == 1);
  CHECK(s[1] == 3);
  CHECK_THROWS(ops::slice(a, 1, 1, 2));

  const Tensor* parts[] = {&s, &s};
  Tensor c = ops::concat(parts, 1);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c[1] == 1);

  Tensor r = ops::reshape(a, {4});
  CHECK(r.shape() == Shape{4});
  CHECK_THROWS(ops::reshape(a, {5}));
}

TEST_CASE("pow domain checks") {
  Tensor a({2}, {2.0, 3.0});
  Tensor p = ops::pow(a, 3.0);
  CHECK(p[0] == 8.0);
  CHECK(p[1] == 27.0);
  CHECK_THROWS(ops::pow(Tensor({1}, {-1.0}), 0.5));
  CHECK_THROWS(ops::pow(Tensor({1}, {0.0}), -1.0));
}

TEST_CASE("conv2d delta kernel is identity") {
  // center tap = 1, one channel, no bias
  Tensor x({1, 1, 4, 4});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = u(rng);
  Tensor w({1, 1, 3, 3});
  w[4] = 1.0;
  Tensor out = ops::conv2d(x, w, nullptr, PadMode::zero);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("conv2d zero kernels give zero output") {
  Tensor x = Tensor::full({2, 3, 5, 5}, 1.2);
  Tensor w({4, 3, 3, 3});
  Tensor out = ops::conv2d(x, w, nullptr, PadMode::zero);
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0);
  CHECK_THROWS(ops::conv2d(Tensor({1, 1, 2, 2}), Tensor({1, 1, 3, 3}), nullptr, PadMode::zero));
}

TEST_CASE("conv2d matches dense reference on small input") {
  // brute-force reference with explicit padding logic
  const std::int64_t b = 2, ic = 2, oc = 3, d = 5, k = 3;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor x({b, ic, d, d}), w({oc, ic, k, k}), bias({oc});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = u(rng);
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = u(rng);
  for (std::int64_t i = 0; i < bias.numel(); ++i) bias[i] = u(rng);

  for (PadMode pad : {PadMode::zero, PadMode::reflect}) {
    Tensor out = ops::conv2d(x, w, &bias, pad);
    for (std::int64_t n = 0; n < b; ++n) {
      for (std::int64_t o = 0; o < oc; ++o) {
        for (std::int64_t y = 0; y < d; ++y) {
          for (std::int64_t xx = 0; xx < d; ++xx) {
            double acc = bias[o];
            for (std::int64_t c = 0; c < ic; ++c) {
              for (std::int64_t ky = 0; ky < k; ++ky) {
                for (std::int64_t kx = 0; kx < k; ++kx) {
                  std::int64_t sy = y + ky - 1, sx = xx + kx - 1;
                  if (pad == PadMode::zero) {
                    if (sy < 0 || sy >= d || sx < 0 || sx >= d) continue;
                  } else {
                    if (sy < 0) sy = -sy;
                    if (sy >= d) sy = 2 * d - 2 - sy;
                    if (sx < 0) sx = -sx;
                    if (sx >= d) sx = 2 * d - 2 - sx;
                  }
                  acc += w[((o * ic + c) * k + ky) * k + kx] * x[((n * ic + c) * d + sy) * d + sx];
                }
              }
            }
            CHECK(out[((n * oc + o) * d + y) * d + xx] == doctest::Approx(acc).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("laplacian of constant field is zero") {
  Tensor f = Tensor::full({1, 2, 6, 6}, 3.7);
  for (Boundary bc : {Boundary::neumann, Boundary::periodic}) {
    Tensor lap = ops::laplacian5(f, 0.5, bc);
    for (std::int64_t i = 0; i < lap.numel(); ++i) CHECK(lap[i] == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("laplacian is exact for quadratics on interior points") {
  const std::int64_t d = 8;
  const double h = 2.0 / static_cast<double>(d);
  Tensor f({1, 1, d, d});
  for (std::int64_t y = 0; y < d; ++y) {
    for (std::int64_t x = 0; x < d; ++x) {
      const double xi = -1.0 + h * (static_cast<double>(x) + 0.5);
      f[y * d + x] = xi * xi;
    }
  }
  Tensor lap = ops::laplacian5(f, h, Boundary::neumann);
  for (std::int64_t y = 1; y + 1 < d; ++y) {
    for (std::int64_t x = 1; x + 1 < d; ++x) {
      CHECK(lap[y * d + x] == doctest::Approx(2.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("laplacian with periodic boundary sums to zero") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor f({1, 1, 7, 7});
  for (std::int64_t i = 0; i < f.numel(); ++i) f[i] = u(rng);
  Tensor lap = ops::laplacian5(f, 0.3, Boundary::periodic);
  CHECK(ops::sum(lap).item() == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("laplacian stencil is symmetric under periodic boundaries") {
  // assemble the operator matrix explicitly on a small grid
  const std::int64_t d = 4, n = d * d;
  std::vector<std::vector<double>> mat(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
  for (std::int64_t j = 0; j < n; ++j) {
    Tensor e({1, 1, d, d});
    e[j] = 1.0;
    Tensor col = ops::laplacian5(e, 1.0, Boundary::periodic);
    for (std::int64_t i = 0; i < n; ++i) mat[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = col[i];
  }
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      CHECK(mat[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ==
            doctest::Approx(mat[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]).epsilon(1e-14));
    }
  }
}

TEST_CASE("laplacian adjoint is the exact transpose for both boundary rules") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  const std::int64_t d = 5;
  Tensor f({1, 1, d, d}), g({1, 1, d, d});
  for (std::int64_t i = 0; i < f.numel(); ++i) {
    f[i] = u(rng);
    g[i] = u(rng);
  }
  for (Boundary bc : {Boundary::neumann, Boundary::periodic}) {
    const double lhs = ops::dot(ops::laplacian5(f, 0.4, bc).span(), g.span());
    const double rhs = ops::dot(f.span(), ops::laplacian5_adjoint(g, 0.4, bc).span());
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}
