#include <cmath>
#include <numbers>

#include "doctest.h"
#include "hsam/ode.hpp"

using namespace hsam;

namespace {

// taped scalar linear field v' = lambda v
TapedField linear_field(double lambda) {
  return [lambda](Tape& t, Var s) { return t.scale(s, lambda); };
}

TapedField zero_field() {
  return [](Tape& t, Var s) { return t.scale(s, 0.0); };
}

// taped harmonic oscillator [v, w]' = [w, -c v]
TapedField harmonic_field(double c) {
  return [c](Tape& t, Var s) {
    Var v = t.slice(s, 1, 0, 1);
    Var w = t.slice(s, 1, 1, 1);
    const Var parts[] = {w, t.scale(v, -c)};
    return t.concat(parts, 1);
  };
}

// plain duffing field (alpha = beta = 1, no damping)
Tensor duffing_plain(const Tensor& s) {
  Tensor d(s.shape());
  d[0] = s[1];
  d[1] = -s[0] + s[0] * s[0] * s[0];
  return d;
}

}  // namespace

TEST_CASE("rk4 leaves the state unchanged under a zero field") {
  Tape t;
  Var x = t.constant(Tensor({1, 3}, {1.0, -2.0, 0.5}));
  Var next = rk4_step(t, zero_field(), x, 0.1);
  for (int i = 0; i < 3; ++i) CHECK(t.value(next)[i] == t.value(x)[i]);
  CHECK_THROWS(rk4_step(t, zero_field(), x, 0.0));
}

TEST_CASE("rk4 on v'=v matches the degree-4 Taylor polynomial") {
  Tape t;
  Var x = t.constant(Tensor({1, 1}, {1.0}));
  Var next = rk4_step(t, linear_field(1.0), x, 0.1);
  CHECK(t.value(next)[0] == doctest::Approx(1.1051708333333333).epsilon(1e-15));
}

TEST_CASE("rk4 is linear in the state for linear fields") {
  const double alpha = 2.75;
  Tape t;
  Var x = t.constant(Tensor({1, 2}, {0.3, -1.1}));
  Var xs = t.constant(Tensor({1, 2}, {alpha * 0.3, alpha * -1.1}));
  TapedField f = harmonic_field(4.0);
  Var a = rk4_step(t, f, x, 0.05);
  Var b = rk4_step(t, f, xs, 0.05);
  for (int i = 0; i < 2; ++i) {
    CHECK(t.value(b)[i] == doctest::Approx(alpha * t.value(a)[i]).epsilon(1e-13));
  }
}

TEST_CASE("integrate_fixed repeats x0 under a zero field") {
  Tape t;
  Var x0 = t.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  IntegrationPlan plan{0.1, 10, 1};
  Var traj = integrate_fixed(t, zero_field(), x0, plan);
  CHECK(t.value(traj).shape() == Shape{10, 2, 2});
  for (int k = 0; k < 10; ++k) {
    for (int i = 0; i < 4; ++i) CHECK(t.value(traj)[k * 4 + i] == t.value(x0)[i]);
  }
}

TEST_CASE("integrate_fixed validates its plan and reports non-finite states") {
  Tape t;
  Var x0 = t.constant(Tensor({1, 1}, {1.0}));
  CHECK_THROWS(integrate_fixed(t, zero_field(), x0, IntegrationPlan{-1.0, 5, 1}));
  CHECK_THROWS(integrate_fixed(t, zero_field(), x0, IntegrationPlan{0.1, 0, 1}));
  // exploding field overflows quickly; error names the step index
  CHECK_THROWS_WITH(integrate_fixed(t, linear_field(1e160), x0, IntegrationPlan{10.0, 3, 1}),
                    doctest::Contains("step"));
}

TEST_CASE("undamped linear pendulum conserves energy over ten rk4 steps") {
  // v'' = -(2 pi omega)^2 v with omega = 2/3; dt small enough that the
  // rk4 amplitude decay stays below 1e-6 relative over 10 steps
  const double omega = 2.0 / 3.0;
  const double c = std::pow(2.0 * std::numbers::pi * omega, 2.0);
  Tape t;
  Var x0 = t.constant(Tensor({1, 2}, {0.2, 0.0}));
  IntegrationPlan plan{0.02, 10, 1};
  Var traj = integrate_fixed(t, harmonic_field(c), x0, plan);
  auto energy = [c](double v, double w) { return 0.5 * w * w + 0.5 * c * v * v; };
  const double e0 = energy(0.2, 0.0);
  for (int k = 0; k < 10; ++k) {
    const double v = t.value(traj)[k * 2], w = t.value(traj)[k * 2 + 1];
    CHECK(std::abs(energy(v, w) - e0) / e0 < 1e-6);
  }
}

TEST_CASE("halving dt reduces the rk4 endpoint error about 16x") {
  auto endpoint = [](double dt, std::int64_t steps) {
    Tape t;
    Var x0 = t.constant(Tensor({1, 1}, {1.0}));
    Var traj = integrate_fixed(t, linear_field(1.0), x0, IntegrationPlan{dt, steps, 1});
    return t.value(traj)[steps - 1];
  };
  const double exact = std::exp(1.0);
  const double e1 = std::abs(endpoint(0.1, 10) - exact);
  const double e2 = std::abs(endpoint(0.05, 20) - exact);
  CHECK(e1 / e2 > 12.0);
  CHECK(e1 / e2 < 20.0);
}

TEST_CASE("rk4 endpoint gradient matches exp(lambda T) for linear fields") {
  const double lambda = 0.7, T = 1.0;
  Tape t;
  Var x0 = t.leaf(Tensor({1, 1}, {1.3}), "x0");
  Var traj = integrate_fixed(t, linear_field(lambda), x0, IntegrationPlan{0.01, 100, 1});
  Var endpoint = t.slice(traj, 0, 99, 1);
  Grad g = t.backward(t.sum(endpoint));
  CHECK(g.at("x0")[0] == doctest::Approx(std::exp(lambda * T)).epsilon(1e-6));
}

TEST_CASE("rk45 reaches e within 1e-7 on v'=v") {
  PlainField f = [](const Tensor& s) { return ops::scale(s, 1.0); };
  const double times[] = {1.0};
  auto out = integrate_rk45(f, Tensor({1}, {1.0}), times, Rk45Options{1e-8, 1e-10});
  REQUIRE(out.size() == 1);
  CHECK(std::abs(out[0][0] - std::exp(1.0)) < 1e-7);
}

TEST_CASE("rk45 is exact for zero fields regardless of tolerances") {
  PlainField f = [](const Tensor& s) { return Tensor(s.shape()); };
  const double times[] = {0.5, 1.0, 7.0};
  auto out = integrate_rk45(f, Tensor({2}, {3.0, -4.0}), times, Rk45Options{1e-3, 1e-3});
  REQUIRE(out.size() == 3);
  for (const auto& s : out) {
    CHECK(s[0] == 3.0);
    CHECK(s[1] == -4.0);
  }
}

TEST_CASE("rk45 damped pendulum energy is non-increasing") {
  const double gamma = 0.5, omega = 2.0 / 3.0;
  const double c = std::pow(2.0 * std::numbers::pi * omega, 2.0);
  PlainField f = [gamma, c](const Tensor& s) {
    Tensor d(s.shape());
    d[0] = s[1];
    d[1] = -gamma * s[1] - c * std::sin(s[0]);
    return d;
  };
  std::vector<double> times;
  for (int i = 1; i <= 100; ++i) times.push_back(0.05 * i);
  auto out = integrate_rk45(f, Tensor({2}, {1.2, 0.0}), times, Rk45Options{1e-9, 1e-11});
  auto energy = [c](const Tensor& s) { return 0.5 * s[1] * s[1] + c * (1.0 - std::cos(s[0])); };
  double prev = energy(Tensor({2}, {1.2, 0.0}));
  for (const auto& s : out) {
    const double e = energy(s);
    CHECK(e <= prev + 1e-10);
    prev = e;
  }
}

TEST_CASE("rk45 undamped duffing conserves energy to 1e-6 relative") {
  std::vector<double> times;
  for (int i = 1; i <= 200; ++i) times.push_back(0.05 * i);
  Tensor x0({2}, {0.9, 0.1});
  auto out = integrate_rk45(duffing_plain, x0, times, Rk45Options{1e-8, 1e-10});
  auto energy = [](const Tensor& s) {
    return 0.5 * s[1] * s[1] + 0.5 * s[0] * s[0] - 0.25 * std::pow(s[0], 4.0);
  };
  const double e0 = energy(x0);
  for (const auto& s : out) {
    CHECK(std::abs(energy(s) - e0) / std::abs(e0) < 1e-6);
  }
}

TEST_CASE("rk45 rejects bad arguments and reports stiffness") {
  PlainField f = [](const Tensor& s) { return ops::scale(s, 1.0); };
  const double times[] = {1.0};
  CHECK_THROWS(integrate_rk45(f, Tensor({1}, {1.0}), times, Rk45Options{0.0, 1e-8}));
  const double bad_times[] = {1.0, 0.5};
  CHECK_THROWS(integrate_rk45(f, Tensor({1}, {1.0}), bad_times, Rk45Options{1e-8, 1e-8}));
  // a finite-time blow-up drives the step size under the floor
  PlainField blow = [](const Tensor& s) {
    Tensor d(s.shape());
    d[0] = s[0] * s[0];
    return d;
  };
  const double far[] = {2.0};
  CHECK_THROWS(integrate_rk45(blow, Tensor({1}, {1.0}), far, Rk45Options{1e-8, 1e-10}));
}

TEST_CASE("taped laplacian agrees with the plain kernel") {
  Tensor f({1, 2, 5, 5});
  for (std::int64_t i = 0; i < f.numel(); ++i) f[i] = std::sin(0.3 * static_cast<double>(i));
  Tensor plain = laplacian_5pt(f, 0.4, Boundary::neumann);
  Tape t;
  Var v = t.constant(f);
  Var taped = laplacian_5pt(t, v, 0.4, Boundary::neumann);
  for (std::int64_t i = 0; i < f.numel(); ++i) CHECK(t.value(taped)[i] == plain[i]);
}
