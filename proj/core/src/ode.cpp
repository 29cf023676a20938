#include "hsam/ode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hsam {

void IntegrationPlan::validate() const {
  if (dt <= 0.0) throw std::invalid_argument("integration plan: dt must be positive");
  if (n_steps < 1) throw std::invalid_argument("integration plan: n_steps must be at least 1");
  if (substeps_per_output < 1) throw std::invalid_argument("integration plan: substeps must be at least 1");
}

Var rk4_step(Tape& tape, const TapedField& field, Var state, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("rk4_step: dt must be positive");
  Var k1 = field(tape, state);
  Var k2 = field(tape, tape.add(state, tape.scale(k1, dt / 2.0)));
  Var k3 = field(tape, tape.add(state, tape.scale(k2, dt / 2.0)));
  Var k4 = field(tape, tape.add(state, tape.scale(k3, dt)));
  Var incr = tape.add(tape.add(k1, k4), tape.scale(tape.add(k2, k3), 2.0));
  return tape.add(state, tape.scale(incr, dt / 6.0));
}

Tensor rk4_step(const PlainField& field, const Tensor& state, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("rk4_step: dt must be positive");
  const Tensor k1 = field(state);
  const Tensor k2 = field(ops::add(state, ops::scale(k1, dt / 2.0)));
  const Tensor k3 = field(ops::add(state, ops::scale(k2, dt / 2.0)));
  const Tensor k4 = field(ops::add(state, ops::scale(k3, dt)));
  Tensor out(state.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
  }
  return out;
}

Var integrate_fixed(Tape& tape, const TapedField& field, Var x0, const IntegrationPlan& plan,
                    std::vector<Var>* visited) {
  plan.validate();
  const double h = plan.dt / static_cast<double>(plan.substeps_per_output);
  Var state = x0;
  if (visited) visited->push_back(state);
  if (!tape.value(state).all_finite()) {
    throw std::runtime_error("integrate_fixed: non-finite initial state");
  }
  Shape stacked_shape = tape.value(x0).shape();
  stacked_shape.insert(stacked_shape.begin(), 1);
  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(plan.n_steps));
  std::int64_t step_index = 0;
  for (std::int64_t out = 0; out < plan.n_steps; ++out) {
    for (int s = 0; s < plan.substeps_per_output; ++s) {
      state = rk4_step(tape, field, state, h);
      ++step_index;
      if (!tape.value(state).all_finite()) {
        throw std::runtime_error("integrate_fixed: non-finite state after step " + std::to_string(step_index));
      }
      if (visited) visited->push_back(state);
    }
    outputs.push_back(tape.reshape(state, stacked_shape));
  }
  return tape.concat(outputs, 0);
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
// 5th-order solution weights equal kA[6]; error weights = b5 - b4.
constexpr double kE[7] = {71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920, -17253.0 / 339200, 22.0 / 525,
                          -1.0 / 40};

}  // namespace

std::vector<Tensor> integrate_rk45(const PlainField& field, const Tensor& x0,
                                   std::span<const double> sample_times, const Rk45Options& opts) {
  if (opts.rtol <= 0.0 || opts.atol <= 0.0) throw std::invalid_argument("rk45: tolerances must be positive");
  if (sample_times.empty()) return {};
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] <= (i ? sample_times[i - 1] : 0.0)) {
      throw std::invalid_argument("rk45: sample times must be positive and strictly increasing");
    }
  }
  const double t_end = sample_times.back();
  const std::int64_t n = x0.numel();

  std::vector<Tensor> k(7);
  Tensor y = x0;
  double t = 0.0;
  k[0] = field(y);  // FSAL: k1 of the next step is k7 of the accepted one

  double h_ctrl = opts.initial_step;
  if (h_ctrl <= 0.0) h_ctrl = std::min(sample_times[0], t_end / 100.0);

  std::vector<Tensor> out;
  out.reserve(sample_times.size());
  std::size_t next_sample = 0;
  const double h_min = 1e-12 * t_end;

  Tensor y_stage(x0.shape()), y5(x0.shape());
  while (next_sample < sample_times.size()) {
    const double dist = sample_times[next_sample] - t;
    const bool landing = h_ctrl >= dist;
    const double h = landing ? dist : h_ctrl;
    if (h < h_min) {
      throw std::runtime_error("rk45: step size underflow at t=" + std::to_string(t) +
                               " (stiff problem or tolerance too tight)");
    }
    // stages 2..7
    for (int s = 1; s < 7; ++s) {
      for (std::int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < s; ++j) acc += kA[s][j] * k[static_cast<std::size_t>(j)][i];
        y_stage[i] = y[i] + h * acc;
      }
      k[static_cast<std::size_t>(s)] = field(y_stage);
    }
    // 5th-order solution is the last stage argument (kA[6] = b5)
    for (std::int64_t i = 0; i < n; ++i) y5[i] = y_stage[i];
    // scaled RMS error estimate
    double err = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double e = 0.0;
      for (int j = 0; j < 7; ++j) e += kE[j] * k[static_cast<std::size_t>(j)][i];
      e *= h;
      const double scale = opts.atol + opts.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
      err += (e / scale) * (e / scale);
    }
    err = std::sqrt(err / static_cast<double>(n));
    if (!std::isfinite(err)) {
      throw std::runtime_error("rk45: non-finite state at t=" + std::to_string(t));
    }

    const bool accept = err <= 1.0;
    if (accept) {
      std::swap(y, y5);
      k[0] = k[6];  // FSAL
      if (landing) {
        t = sample_times[next_sample];
        out.push_back(y);
        ++next_sample;
      } else {
        t += h;
      }
    }
    // controller update from the attempted step; a clipped landing step must
    // not shrink the preferred step below its pre-clip value
    const double factor = err > 0.0 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
    const double h_next = h * factor;
    h_ctrl = (accept && landing) ? std::max(h_ctrl, h_next) : h_next;
  }
  return out;
}

Var laplacian_5pt(Tape& tape, Var f, double h, Boundary bc) { return tape.laplacian5(f, h, bc); }

Tensor laplacian_5pt(const Tensor& f, double h, Boundary bc) { return ops::laplacian5(f, h, bc); }

}  // namespace hsam
