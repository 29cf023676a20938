// Training engine: squared-error loss, the three sharpness-aware perturbation
// rules restricted to the phi block, Adam with cosine annealing, and the
// erm / l2reg / freg baselines.
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "hsam/hybrid.hpp"

namespace hsam {

enum class Method { erm, l2reg, freg_fnorm, freg_reduction, sam, asam, fsam };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
bool is_sam_family(Method m);

struct SamConfig {
  Method variant = Method::sam;  // sam | asam | fsam
  double rho_phi = 0.05;
  double fisher_damping = 1.0;        // gamma_F, fsam only
  double zero_grad_threshold = 1e-12;

  void validate() const;
};

struct OptimizerConfig {
  double base_lr = 1e-4;
  double final_lr = 1e-6;
  std::int64_t total_iterations = 20000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t minibatch = 0;  // 0 = full batch

  void validate() const;
};

// A training batch; y is stored time-major ([n_steps, batch, ...]) to match
// the solver's stacked output.
struct Batch {
  Tensor x;
  Tensor y;
};

Var loss_mse(Tape& tape, const HybridModel& model, const ParamsView& view, const Batch& batch, bool training,
             std::vector<Var>* visited = nullptr);

// Perturbation rules (plain tensor math; the result is treated as a constant
// by the subsequent gradient evaluation). Each returns zero when the relevant
// gradient norm falls below the threshold.
Tensor perturb_sam(const Tensor& grad_phi, double rho, double threshold = 1e-12);
Tensor perturb_asam(const Tensor& phi, const Tensor& grad_phi, double rho, double threshold = 1e-12);
Tensor perturb_fsam(const Tensor& grad_phi, const Tensor& fisher_diag, double rho, double threshold = 1e-12);

// Anti-degenerate diagonal empirical-Fisher surrogate F_i = 1 + gamma_F * g_i^2.
Tensor estimate_fisher_diag(const Tensor& grad_phi, double gamma_f);

struct AdamState {
  Tensor m_theta, v_theta, m_phi, v_phi;
  std::int64_t t = 0;

  static AdamState init(const ParamVector& pv);
};

// Standard bias-corrected Adam update of both blocks in place.
void adam_update(AdamState& state, ParamVector& pv, const Tensor& grad_theta, const Tensor& grad_phi,
                 double lr, const OptimizerConfig& cfg);

double cosine_lr(std::int64_t iteration, const OptimizerConfig& cfg);

// Regularizers.
Var reg_l2(Tape& tape, Var phi);
Var reg_fnorm(Tape& tape, const HybridModel& model, const ParamsView& view, std::span<const Var> states,
              bool training);
Var reg_reduction(Tape& tape, const HybridModel& model, const ParamsView& view, const Reduction& red, Var x,
                  Var yhat_full);

struct TrainConfig {
  Method method = Method::erm;
  double lambda = 0.0;  // lambda_p (l2reg) or lambda_f (freg)
  SamConfig sam;        // used when method is sam/asam/fsam
  OptimizerConfig opt;
};

struct StepMetrics {
  double loss = 0.0;            // data loss at the unperturbed point
  double loss_perturbed = 0.0;  // data loss at (theta, phi + eps); equals loss for non-SAM methods
  double objective = 0.0;       // loss + lambda * regularizer, as optimized
  double grad_theta_norm = 0.0;
  double grad_phi_norm = 0.0;
  double lr = 0.0;
};

// One optimization step on the given batch. SAM methods follow the two-pass
// scheme: gradient at (theta, phi), phi-only perturbation, gradient at the
// perturbed point, Adam update of both blocks at the original point.
StepMetrics train_step(const HybridModel& model, ParamVector& pv, const Batch& batch, const TrainConfig& cfg,
                       AdamState& opt_state, std::int64_t iteration);

}  // namespace hsam
