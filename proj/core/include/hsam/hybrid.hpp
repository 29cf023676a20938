// Hybrid models: an incomplete scientific part f plus a neural correction g,
// combined additively inside a neural ODE, or as the general composition
// g(x, f(x)). The scientific parameters form the theta block.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hsam/nn.hpp"
#include "hsam/ode.hpp"

namespace hsam {

enum class TaskKind { pendulum, duffing, reactdiff };

std::string task_name(TaskKind k);
TaskKind task_from_name(const std::string& name);

struct ThetaParamInfo {
  std::string name;
  double init_lo;  // documented prior range for uniform init
  double init_hi;
};

struct ScientificPart {
  TaskKind kind = TaskKind::pendulum;

  std::vector<ThetaParamInfo> theta_params() const;
  ThetaSpec theta_spec() const;
  std::int64_t theta_size() const { return static_cast<std::int64_t>(theta_params().size()); }
};

// A fixed, parameter-free stand-in for the neural part; used to validate
// identifiability of theta when the residual is known exactly.
struct AnalyticResidual {
  enum class Kind { zero, duffing_cubic, pendulum_damping, reactdiff_reaction };
  Kind kind = Kind::zero;
  double beta = 1.0;    // duffing_cubic: g = beta * v^3
  double gamma = 0.5;   // pendulum_damping: g = -gamma * v_dot
  double kappa = 0.005; // reactdiff_reaction
};

using NeuralPart = std::variant<std::monostate, MlpSpec, ConvNetSpec, AnalyticResidual>;

enum class Composition { additive_ode, general_composition };

struct HybridModel {
  ScientificPart scientific;
  NeuralPart neural;  // monostate = g identically zero
  Composition composition = Composition::additive_ode;
  IntegrationPlan integration;
  int grid_d = 32;                       // reactdiff spatial resolution
  Boundary laplacian_bc = Boundary::neumann;

  NeuralLayout neural_layout() const;
  ParamVector init(const ThetaInit& theta_init, std::uint64_t seed) const;
  double grid_spacing() const { return 2.0 / static_cast<double>(grid_d); }
};

// Scientific-model-only reduction h' = A f. For the additive tasks A is the
// identity; `map` (applied as z @ map) handles mismatched ambient spaces.
struct Reduction {
  bool identity = true;
  Tensor map;  // [z_dim, y_dim], used when !identity
};

// Per-task derivative fields. g receives the full state; for the oscillator
// tasks it contributes a scalar correction to the acceleration.
Var pendulum_field(Tape& tape, const HybridModel& model, const ParamsView& view, Var state, bool training);
Var duffing_field(Tape& tape, const HybridModel& model, const ParamsView& view, Var state, bool training);
Var reactdiff_field(Tape& tape, const HybridModel& model, const ParamsView& view, Var state, bool training);

// Combined (f + g) field / scientific-only field as closures for the solver.
TapedField make_hybrid_field(const HybridModel& model, const ParamsView& view, bool training);
TapedField make_scientific_field(const HybridModel& model, const ParamsView& view);

// Neural correction alone, at the given states (used by the functional-norm
// regularizer).
Var neural_residual(Tape& tape, const HybridModel& model, const ParamsView& view, Var state, bool training);

// Unrolls the combined field from x over the model's integration plan;
// output has a leading time axis of length n_steps.
Var hybrid_predict(Tape& tape, const HybridModel& model, const ParamsView& view, Var x, bool training,
                   std::vector<Var>* visited = nullptr);

// Integrates the scientific part alone and applies the reduction map.
Var reduction_predict(Tape& tape, const HybridModel& model, const ParamsView& view, const Reduction& red,
                      Var x);

// General composition h(x) = g(x, f(x)) and its reduction h'(x) = A f(x),
// for arbitrary scientific maps.
using SciFn = std::function<Var(Tape&, Var theta, Var x)>;
Var compose_general(Tape& tape, const SciFn& f, const MlpSpec& g, const ParamsView& view, Var x);
Var reduce_general(Tape& tape, const SciFn& f, const Reduction& red, const ParamsView& view, Var x);

}  // namespace hsam
