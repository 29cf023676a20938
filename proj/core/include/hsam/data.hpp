// Synthetic dataset generation for the three benchmark systems, plus noise
// injection and a checksummed binary dataset format ("HSDT").
#pragma once

#include <filesystem>
#include <string>

#include "hsam/hybrid.hpp"
#include "hsam/ode.hpp"
#include "hsam/optim.hpp"

namespace hsam {

struct TaskSpec {
  TaskKind task = TaskKind::pendulum;

  // data-generating parameters
  double pend_gamma = 0.5;
  double pend_omega = 2.0 / 3.0;
  double rd_a = 0.001;
  double rd_b = 0.005;
  double rd_kappa = 0.005;
  double duff_alpha = 1.0;
  double duff_beta = 1.0;
  double duff_damping = 0.0;  // the appendix form of the oscillator has none

  double fine_dt = 0.02;
  int subsample = 10;
  std::int64_t m_y = 10;
  int grid_d = 32;
  Boundary bc = Boundary::neumann;

  std::int64_t n_train = 25, n_val = 25, n_test = 25;
  double noise_std = 0.01;
  bool noise_on_x = true;  // noise both x and y; disable to noise y only

  double rtol = 1e-8;
  double atol = 1e-10;

  static TaskSpec defaults(TaskKind kind);
  double effective_dt() const { return fine_dt * static_cast<double>(subsample); }
  std::vector<double> theta_truth() const;
  Shape x_shape() const;  // per-sample
  Shape y_shape() const;  // per-sample

  void validate() const;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

struct Dataset {
  Tensor x, y;              // observed (noisy) data
  Tensor x_clean, y_clean;  // diagnostics only, never used for training
  std::string split;
  TaskSpec spec;
  std::uint64_t seed = 0;
  std::int64_t rejected = 0;  // duffing trajectories resampled for leaving the basin

  std::int64_t size() const { return x.numel() ? x.dim(0) : 0; }
};

struct DatasetTriple {
  Dataset train, val, test;
};

// True dynamics as plain (untaped) fields. The reaction-diffusion field acts
// on [1, 2, d, d] states.
PlainField true_field(const TaskSpec& spec);

Dataset gen_pendulum(const TaskSpec& spec, const std::string& split, std::uint64_t seed);
Dataset gen_duffing(const TaskSpec& spec, const std::string& split, std::uint64_t seed);
Dataset gen_reactdiff(const TaskSpec& spec, const std::string& split, std::uint64_t seed);

// Train/val/test from disjoint seed streams of the master seed.
DatasetTriple generate(const TaskSpec& spec, std::uint64_t seed);

// Adds i.i.d. Gaussian noise to the observed tensors of a clean dataset
// (x only if spec.noise_on_x). The clean copies are retained.
Dataset add_noise(Dataset ds, double std, std::uint64_t noise_seed);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Batch with time-major targets; empty `indices` selects every pair.
Batch make_batch(const Dataset& ds, std::span<const std::int64_t> indices = {});

}  // namespace hsam
