// Numerical integration: differentiable fixed-step RK4 for training-time
// unrolls and adaptive Dormand-Prince 5(4) for data generation.
#pragma once

#include <functional>
#include <vector>

#include "hsam/autodiff.hpp"
#include "hsam/tensor.hpp"

namespace hsam {

// Derivative of the state; output shape equals input shape.
using TapedField = std::function<Var(Tape&, Var state)>;
using PlainField = std::function<Tensor(const Tensor& state)>;

struct IntegrationPlan {
  double dt = 0.0;              // output spacing, task time units
  std::int64_t n_steps = 0;     // number of output states
  int substeps_per_output = 1;  // internal RK4 steps per output

  void validate() const;
};

// One classical 4-stage Runge-Kutta step, recorded on the tape.
Var rk4_step(Tape& tape, const TapedField& field, Var state, double dt);
Tensor rk4_step(const PlainField& field, const Tensor& state, double dt);

// Integrates and stacks the states at dt, 2*dt, ..., n_steps*dt along a new
// leading time axis (the initial state is excluded). If `visited` is given,
// every solver step-boundary state (including x0) is appended to it.
Var integrate_fixed(Tape& tape, const TapedField& field, Var x0, const IntegrationPlan& plan,
                    std::vector<Var>* visited = nullptr);

struct Rk45Options {
  double rtol = 1e-8;
  double atol = 1e-10;
  double initial_step = 0.0;  // 0 = automatic
};

// Adaptive Dormand-Prince 5(4), landing each step exactly on the requested
// sample times (which must be positive and strictly increasing; integration
// starts at t = 0). Not taped; for data generation and oracles.
std::vector<Tensor> integrate_rk45(const PlainField& field, const Tensor& x0,
                                   std::span<const double> sample_times, const Rk45Options& opts = {});

Var laplacian_5pt(Tape& tape, Var f, double h, Boundary bc);
Tensor laplacian_5pt(const Tensor& f, double h, Boundary bc);

}  // namespace hsam
