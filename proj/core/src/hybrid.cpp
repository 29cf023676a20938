#include "hsam/hybrid.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hsam {

std::string task_name(TaskKind k) {
  switch (k) {
    case TaskKind::pendulum: return "pendulum";
    case TaskKind::duffing: return "duffing";
    case TaskKind::reactdiff: return "reactdiff";
  }
  throw std::logic_error("bad task kind");
}

TaskKind task_from_name(const std::string& name) {
  if (name == "pendulum") return TaskKind::pendulum;
  if (name == "duffing") return TaskKind::duffing;
  if (name == "reactdiff") return TaskKind::reactdiff;
  throw std::invalid_argument("unknown task '" + name + "'");
}

std::vector<ThetaParamInfo> ScientificPart::theta_params() const {
  switch (kind) {
    case TaskKind::pendulum: return {{"omega", 0.0, 2.0}};
    case TaskKind::duffing: return {{"alpha", 0.0, 2.0}};
    case TaskKind::reactdiff: return {{"a", 0.0, 0.02}, {"b", 0.0, 0.02}};
  }
  throw std::logic_error("bad task kind");
}

ThetaSpec ScientificPart::theta_spec() const {
  ThetaSpec s;
  for (const auto& p : theta_params()) s.names.push_back(p.name);
  return s;
}

NeuralLayout HybridModel::neural_layout() const {
  if (std::holds_alternative<MlpSpec>(neural)) return std::get<MlpSpec>(neural);
  if (std::holds_alternative<ConvNetSpec>(neural)) return std::get<ConvNetSpec>(neural);
  return std::monostate{};
}

ParamVector HybridModel::init(const ThetaInit& theta_init, std::uint64_t seed) const {
  return init_params(scientific.theta_spec(), neural_layout(), theta_init, seed);
}

namespace {

void check_state2(const Tensor& s, const char* who) {
  if (s.rank() != 2 || s.dim(1) != 2) {
    throw std::invalid_argument(std::string(who) + ": state must be [batch,2], got " + shape_str(s.shape()));
  }
}

Var analytic_residual(Tape& tape, const AnalyticResidual& r, Var state) {
  const Tensor& sv = tape.value(state);
  switch (r.kind) {
    case AnalyticResidual::Kind::zero: {
      Shape out = sv.shape();
      if (out.size() == 2) out[1] = 1;  // scalar correction for oscillator states
      return tape.constant(Tensor(out));
    }
    case AnalyticResidual::Kind::duffing_cubic: {
      check_state2(sv, "duffing residual");
      Var v = tape.slice(state, 1, 0, 1);
      return tape.scale(tape.pow(v, 3.0), r.beta);
    }
    case AnalyticResidual::Kind::pendulum_damping: {
      check_state2(sv, "pendulum residual");
      Var w = tape.slice(state, 1, 1, 1);
      return tape.scale(w, -r.gamma);
    }
    case AnalyticResidual::Kind::reactdiff_reaction: {
      // [u - u^3 - kappa - v ; u - v]
      Var u = tape.slice(state, 1, 0, 1);
      Var v = tape.slice(state, 1, 1, 1);
      Var ru = tape.sub(tape.sub(tape.sub(u, tape.pow(u, 3.0)), tape.constant(r.kappa)), v);
      Var rv = tape.sub(u, v);
      const Var parts[] = {ru, rv};
      return tape.concat(parts, 1);
    }
  }
  throw std::logic_error("bad residual kind");
}

}  // namespace

Var neural_residual(Tape& tape, const HybridModel& model, const ParamsView& view, Var state, bool training) {
  if (std::holds_alternative<MlpSpec>(model.neural)) {
    return mlp_forward(tape, std::get<MlpSpec>(model.neural), view, state);
  }
  if (std::holds_alternative<ConvNetSpec>(model.neural)) {
    return convnet_forward(tape, std::get<ConvNetSpec>(model.neural), view, state, training);
  }
  if (std::holds_alternative<AnalyticResidual>(model.neural)) {
    return analytic_residual(tape, std::get<AnalyticResidual>(model.neural), state);
  }
  // monostate: g identically zero
  return analytic_residual(tape, AnalyticResidual{}, state);
}

namespace {

// Shared shape for the two second-order oscillator tasks: state [v, v_dot],
// derivative [v_dot, acc_sci + g(state)].
Var oscillator_field(Tape& tape, const HybridModel& model, const ParamsView& view, Var state, bool training,
                     bool with_neural) {
  check_state2(tape.value(state), "oscillator field");
  Var v = tape.slice(state, 1, 0, 1);
  Var w = tape.slice(state, 1, 1, 1);
  Var acc;
  if (model.scientific.kind == TaskKind::pendulum) {
    Var omega = view.param("theta.omega");
    Var coeff = tape.pow(tape.scale(omega, 2.0 * std::numbers::pi), 2.0);
    acc = tape.neg(tape.mul(tape.sin(v), coeff));
  } else {
    Var alpha = view.param("theta.alpha");
    acc = tape.neg(tape.mul(v, alpha));
  }
  if (with_neural) acc = tape.add(acc, neural_residual(tape, model, view, state, training));
  const Var parts[] = {w, acc};
  return tape.concat(parts, 1);
}

Var reactdiff_field_impl(Tape& tape, const HybridModel& model, const ParamsView& view, Var state,
                         bool training, bool with_neural) {
  const Tensor& sv = tape.value(state);
  if (sv.rank() != 4 || sv.dim(1) != 2) {
    throw std::invalid_argument("reactdiff field: state must be [batch,2,d,d], got " + shape_str(sv.shape()));
  }
  Var lap = tape.laplacian5(state, model.grid_spacing(), model.laplacian_bc);
  Var lap_u = tape.slice(lap, 1, 0, 1);
  Var lap_v = tape.slice(lap, 1, 1, 1);
  Var a = view.param("theta.a");
  Var b = view.param("theta.b");
  const Var parts[] = {tape.mul(lap_u, a), tape.mul(lap_v, b)};
  Var sci = tape.concat(parts, 1);
  if (with_neural) sci = tape.add(sci, neural_residual(tape, model, view, state, training));
  return sci;
}

Var dispatch_field(Tape& tape, const HybridModel& model, const ParamsView& view, Var state, bool training,
                   bool with_neural) {
  switch (model.scientific.kind) {
    case TaskKind::pendulum:
    case TaskKind::duffing:
      return oscillator_field(tape, model, view, state, training, with_neural);
    case TaskKind::reactdiff:
      return reactdiff_field_impl(tape, model, view, state, training, with_neural);
  }
  throw std::logic_error("bad task kind");
}

}  // namespace

Var pendulum_field(Tape& tape, const HybridModel& model, const ParamsView& view, Var state, bool training) {
  return oscillator_field(tape, model, view, state, training, true);
}

Var duffing_field(Tape& tape, const HybridModel& model, const ParamsView& view, Var state, bool training) {
  return oscillator_field(tape, model, view, state, training, true);
}

Var reactdiff_field(Tape& tape, const HybridModel& model, const ParamsView& view, Var state, bool training) {
  return reactdiff_field_impl(tape, model, view, state, training, true);
}

TapedField make_hybrid_field(const HybridModel& model, const ParamsView& view, bool training) {
  return [&model, view, training](Tape& tape, Var state) {
    return dispatch_field(tape, model, view, state, training, true);
  };
}

TapedField make_scientific_field(const HybridModel& model, const ParamsView& view) {
  return [&model, view](Tape& tape, Var state) {
    return dispatch_field(tape, model, view, state, false, false);
  };
}

namespace {

void check_input(const HybridModel& model, const Tensor& x) {
  if (model.scientific.kind == TaskKind::reactdiff) {
    if (x.rank() != 4 || x.dim(1) != 2 || x.dim(2) != model.grid_d || x.dim(3) != model.grid_d) {
      throw std::invalid_argument("hybrid_predict: reactdiff input must be [batch,2," +
                                  std::to_string(model.grid_d) + "," + std::to_string(model.grid_d) +
                                  "], got " + shape_str(x.shape()));
    }
  } else {
    check_state2(x, "hybrid_predict");
  }
}

}  // namespace

Var hybrid_predict(Tape& tape, const HybridModel& model, const ParamsView& view, Var x, bool training,
                   std::vector<Var>* visited) {
  if (model.composition != Composition::additive_ode) {
    throw std::invalid_argument("hybrid_predict: the benchmark tasks use the additive-ode composition; "
                                "use compose_general for general compositions");
  }
  check_input(model, tape.value(x));
  return integrate_fixed(tape, make_hybrid_field(model, view, training), x, model.integration, visited);
}

Var reduction_predict(Tape& tape, const HybridModel& model, const ParamsView& view, const Reduction& red,
                      Var x) {
  check_input(model, tape.value(x));
  Var traj = integrate_fixed(tape, make_scientific_field(model, view), x, model.integration);
  if (red.identity) return traj;
  throw std::invalid_argument("reduction_predict: only the identity map applies to trajectory outputs");
}

Var compose_general(Tape& tape, const SciFn& f, const MlpSpec& g, const ParamsView& view, Var x) {
  Var z = f(tape, view.theta, x);
  const Var parts[] = {x, z};
  Var xz = tape.concat(parts, 1);
  return mlp_forward(tape, g, view, xz);
}

Var reduce_general(Tape& tape, const SciFn& f, const Reduction& red, const ParamsView& view, Var x) {
  Var z = f(tape, view.theta, x);
  if (red.identity) return z;
  const Tensor& zv = tape.value(z);
  if (zv.rank() != 2 || zv.dim(1) != red.map.dim(0)) {
    throw std::invalid_argument("reduce_general: map " + shape_str(red.map.shape()) +
                                " incompatible with scientific output " + shape_str(zv.shape()));
  }
  return tape.matmul(z, tape.constant(red.map));
}

}  // namespace hsam
