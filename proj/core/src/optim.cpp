#include "hsam/optim.hpp"

#include <cassert>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hsam {

std::string method_name(Method m) {
  switch (m) {
    case Method::erm: return "erm";
    case Method::l2reg: return "l2reg";
    case Method::freg_fnorm: return "freg";
    case Method::freg_reduction: return "freg-reduction";
    case Method::sam: return "sam";
    case Method::asam: return "asam";
    case Method::fsam: return "fsam";
  }
  throw std::logic_error("bad method");
}

Method method_from_name(const std::string& name) {
  if (name == "erm") return Method::erm;
  if (name == "l2reg") return Method::l2reg;
  if (name == "freg" || name == "freg-fnorm") return Method::freg_fnorm;
  if (name == "freg-reduction") return Method::freg_reduction;
  if (name == "sam") return Method::sam;
  if (name == "asam") return Method::asam;
  if (name == "fsam") return Method::fsam;
  throw std::invalid_argument("unknown method '" + name + "'");
}

bool is_sam_family(Method m) { return m == Method::sam || m == Method::asam || m == Method::fsam; }

void SamConfig::validate() const {
  if (!is_sam_family(variant)) throw std::invalid_argument("sam config: variant must be sam/asam/fsam");
  if (rho_phi <= 0.0) throw std::invalid_argument("sam config: rho_phi must be positive");
  if (fisher_damping < 0.0) throw std::invalid_argument("sam config: fisher damping must be non-negative");
}

void OptimizerConfig::validate() const {
  if (base_lr <= 0.0 || final_lr <= 0.0 || final_lr > base_lr) {
    throw std::invalid_argument("optimizer config: need 0 < final_lr <= base_lr");
  }
  if (total_iterations < 1) throw std::invalid_argument("optimizer config: total_iterations must be positive");
}

Var loss_mse(Tape& tape, const HybridModel& model, const ParamsView& view, const Batch& batch, bool training,
             std::vector<Var>* visited) {
  if (batch.x.numel() == 0 || batch.y.numel() == 0) throw std::invalid_argument("loss_mse: empty batch");
  const std::int64_t n = batch.x.dim(0);
  Var x = tape.constant(batch.x);
  Var yhat = hybrid_predict(tape, model, view, x, training, visited);
  if (!tape.value(yhat).same_shape(batch.y)) {
    throw std::invalid_argument("loss_mse: prediction " + shape_str(tape.value(yhat).shape()) +
                                " vs target " + shape_str(batch.y.shape()));
  }
  Var resid = tape.sub(yhat, tape.constant(batch.y));
  return tape.scale(tape.squared_norm(resid), 1.0 / static_cast<double>(n));
}

Tensor perturb_sam(const Tensor& grad_phi, double rho, double threshold) {
  if (rho <= 0.0) throw std::invalid_argument("perturb_sam: rho must be positive");
  const double nrm = ops::norm2(grad_phi.span());
  if (nrm < threshold) return Tensor(grad_phi.shape());
  return ops::scale(grad_phi, rho / nrm);
}

Tensor perturb_asam(const Tensor& phi, const Tensor& grad_phi, double rho, double threshold) {
  if (rho <= 0.0) throw std::invalid_argument("perturb_asam: rho must be positive");
  if (!phi.same_shape(grad_phi)) throw std::invalid_argument("perturb_asam: shape mismatch");
  // T_w g with T_w = diag(|w|): numerator w^2 g, norm over |w| g.
  double nrm2 = 0.0;
  for (std::int64_t i = 0; i < phi.numel(); ++i) {
    const double wg = phi[i] * grad_phi[i];
    nrm2 += wg * wg;
  }
  const double nrm = std::sqrt(nrm2);
  if (nrm < threshold) return Tensor(grad_phi.shape());
  Tensor eps(grad_phi.shape());
  for (std::int64_t i = 0; i < phi.numel(); ++i) {
    eps[i] = rho * phi[i] * phi[i] * grad_phi[i] / nrm;
  }
  return eps;
}

Tensor perturb_fsam(const Tensor& grad_phi, const Tensor& fisher_diag, double rho, double threshold) {
  if (rho <= 0.0) throw std::invalid_argument("perturb_fsam: rho must be positive");
  if (!grad_phi.same_shape(fisher_diag)) throw std::invalid_argument("perturb_fsam: shape mismatch");
  double quad = 0.0;  // g^T F^-1 g
  for (std::int64_t i = 0; i < grad_phi.numel(); ++i) {
    if (fisher_diag[i] <= 0.0) throw std::domain_error("perturb_fsam: non-positive Fisher entry");
    quad += grad_phi[i] * grad_phi[i] / fisher_diag[i];
  }
  if (quad < threshold * threshold) return Tensor(grad_phi.shape());
  const double denom = std::sqrt(quad);
  Tensor eps(grad_phi.shape());
  for (std::int64_t i = 0; i < grad_phi.numel(); ++i) {
    eps[i] = rho * (grad_phi[i] / fisher_diag[i]) / denom;
  }
  return eps;
}

Tensor estimate_fisher_diag(const Tensor& grad_phi, double gamma_f) {
  if (gamma_f < 0.0) throw std::invalid_argument("estimate_fisher_diag: gamma_f must be non-negative");
  Tensor f(grad_phi.shape());
  for (std::int64_t i = 0; i < grad_phi.numel(); ++i) f[i] = 1.0 + gamma_f * grad_phi[i] * grad_phi[i];
  return f;
}

AdamState AdamState::init(const ParamVector& pv) {
  AdamState s;
  s.m_theta = Tensor(pv.theta.shape());
  s.v_theta = Tensor(pv.theta.shape());
  s.m_phi = Tensor(pv.phi.shape());
  s.v_phi = Tensor(pv.phi.shape());
  s.t = 0;
  return s;
}

namespace {

void adam_block(Tensor& param, Tensor& m, Tensor& v, const Tensor& g, double lr, double bc1, double bc2,
                const OptimizerConfig& cfg) {
  for (std::int64_t i = 0; i < param.numel(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace

void adam_update(AdamState& state, ParamVector& pv, const Tensor& grad_theta, const Tensor& grad_phi,
                 double lr, const OptimizerConfig& cfg) {
  if (!grad_theta.same_shape(pv.theta) || !grad_phi.same_shape(pv.phi)) {
    throw std::invalid_argument("adam_update: gradient shapes do not match parameter blocks");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  adam_block(pv.theta, state.m_theta, state.v_theta, grad_theta, lr, bc1, bc2, cfg);
  adam_block(pv.phi, state.m_phi, state.v_phi, grad_phi, lr, bc1, bc2, cfg);
}

double cosine_lr(std::int64_t iteration, const OptimizerConfig& cfg) {
  if (iteration < 0 || iteration > cfg.total_iterations) {
    throw std::invalid_argument("cosine_lr: iteration out of range");
  }
  const double frac = static_cast<double>(iteration) / static_cast<double>(cfg.total_iterations);
  return cfg.final_lr + 0.5 * (cfg.base_lr - cfg.final_lr) * (1.0 + std::cos(std::numbers::pi * frac));
}

Var reg_l2(Tape& tape, Var phi) { return tape.squared_norm(phi); }

Var reg_fnorm(Tape& tape, const HybridModel& model, const ParamsView& view, std::span<const Var> states,
              bool training) {
  if (states.empty()) throw std::invalid_argument("reg_fnorm: empty state sample set");
  Var acc;
  std::int64_t total = 0;
  for (Var s : states) {
    Var g = neural_residual(tape, model, view, s, training);
    total += tape.value(s).dim(0);
    Var sq = tape.squared_norm(g);
    acc = acc.valid() ? tape.add(acc, sq) : sq;
  }
  return tape.scale(acc, 1.0 / static_cast<double>(total));
}

Var reg_reduction(Tape& tape, const HybridModel& model, const ParamsView& view, const Reduction& red, Var x,
                  Var yhat_full) {
  Var yred = reduction_predict(tape, model, view, red, x);
  const Tensor& a = tape.value(yhat_full);
  const Tensor& b = tape.value(yred);
  if (!a.same_shape(b)) {
    throw std::invalid_argument("reg_reduction: hybrid output " + shape_str(a.shape()) +
                                " vs reduction output " + shape_str(b.shape()));
  }
  const std::int64_t n = tape.value(x).dim(0);
  return tape.scale(tape.squared_norm(tape.sub(yhat_full, yred)), 1.0 / static_cast<double>(n));
}

namespace {

struct Pass {
  double loss = 0.0;
  double objective = 0.0;
  Tensor grad_theta;
  Tensor grad_phi;
};

// One forward+backward evaluation of the training objective at pv.
Pass objective_pass(const HybridModel& model, ParamVector& pv, const Batch& batch, const TrainConfig& cfg) {
  if (batch.x.numel() == 0 || batch.y.numel() == 0) throw std::invalid_argument("train_step: empty batch");
  Tape tape;
  ParamsView view = make_view(tape, pv);
  std::vector<Var> visited;
  const bool want_states = cfg.method == Method::freg_fnorm;
  const std::int64_t n = batch.x.dim(0);

  Var x = tape.constant(batch.x);
  Var yhat = hybrid_predict(tape, model, view, x, /*training=*/true, want_states ? &visited : nullptr);
  if (!tape.value(yhat).same_shape(batch.y)) {
    throw std::invalid_argument("train_step: prediction " + shape_str(tape.value(yhat).shape()) +
                                " vs target " + shape_str(batch.y.shape()));
  }
  Var resid = tape.sub(yhat, tape.constant(batch.y));
  Var loss = tape.scale(tape.squared_norm(resid), 1.0 / static_cast<double>(n));

  Var objective = loss;
  switch (cfg.method) {
    case Method::l2reg:
      objective = tape.add(loss, tape.scale(reg_l2(tape, view.phi), cfg.lambda));
      break;
    case Method::freg_fnorm:
      objective = tape.add(loss, tape.scale(reg_fnorm(tape, model, view, visited, true), cfg.lambda));
      break;
    case Method::freg_reduction:
      objective = tape.add(loss, tape.scale(reg_reduction(tape, model, view, Reduction{}, x, yhat), cfg.lambda));
      break;
    default:
      break;
  }
  Pass p;
  p.loss = tape.value(loss).item();
  p.objective = tape.value(objective).item();
  if (!std::isfinite(p.objective)) {
    throw std::runtime_error("train_step: non-finite loss (" + std::to_string(p.loss) + ")");
  }
  Grad g = tape.backward(objective);
  p.grad_theta = g.at("theta");
  p.grad_phi = g.at("phi");
  return p;
}

}  // namespace

StepMetrics train_step(const HybridModel& model, ParamVector& pv, const Batch& batch, const TrainConfig& cfg,
                       AdamState& opt_state, std::int64_t iteration) {
  cfg.opt.validate();
  if (iteration < 0 || iteration >= cfg.opt.total_iterations) {
    throw std::invalid_argument("train_step: iteration out of range");
  }
  StepMetrics metrics;
  metrics.lr = cosine_lr(iteration, cfg.opt);

  Pass first = objective_pass(model, pv, batch, cfg);
  metrics.loss = first.loss;

  Pass* update_pass = &first;
  Pass second;
  if (is_sam_family(cfg.method)) {
    SamConfig sam = cfg.sam;
    sam.variant = cfg.method;
    sam.validate();
    Tensor eps;
    switch (cfg.method) {
      case Method::sam:
        eps = perturb_sam(first.grad_phi, sam.rho_phi, sam.zero_grad_threshold);
        break;
      case Method::asam:
        eps = perturb_asam(pv.phi, first.grad_phi, sam.rho_phi, sam.zero_grad_threshold);
        break;
      default:
        eps = perturb_fsam(first.grad_phi, estimate_fisher_diag(first.grad_phi, sam.fisher_damping),
                           sam.rho_phi, sam.zero_grad_threshold);
        break;
    }
    // the theta block of the applied perturbation is identically zero: only
    // phi is displaced for the second pass
    const Tensor theta_before = pv.theta;
    Tensor phi_saved = pv.phi;
    for (std::int64_t i = 0; i < pv.phi.numel(); ++i) pv.phi[i] += eps[i];
    second = objective_pass(model, pv, batch, cfg);
    pv.phi = std::move(phi_saved);
    assert(pv.theta.vec() == theta_before.vec());
    (void)theta_before;
    metrics.loss_perturbed = second.loss;
    update_pass = &second;
  } else {
    metrics.loss_perturbed = first.loss;
  }

  metrics.objective = update_pass->objective;
  metrics.grad_theta_norm = ops::norm2(update_pass->grad_theta.span());
  metrics.grad_phi_norm = ops::norm2(update_pass->grad_phi.span());
  adam_update(opt_state, pv, update_pass->grad_theta, update_pass->grad_phi, metrics.lr, cfg.opt);
  return metrics;
}

}  // namespace hsam
