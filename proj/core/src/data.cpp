#include "hsam/data.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hsam/rng.hpp"
#include "io_util.hpp"
#include "json_conv.hpp"

namespace hsam {

using nlohmann::json;

TaskSpec TaskSpec::defaults(TaskKind kind) {
  TaskSpec s;
  s.task = kind;
  switch (kind) {
    case TaskKind::pendulum:
      s.fine_dt = 0.02;
      s.subsample = 10;
      s.m_y = 10;
      s.n_train = s.n_val = s.n_test = 25;
      break;
    case TaskKind::duffing:
      s.fine_dt = 0.005;
      s.subsample = 20;
      s.m_y = 10;
      s.n_train = s.n_val = s.n_test = 100;
      break;
    case TaskKind::reactdiff:
      s.fine_dt = 0.001;
      s.subsample = 100;
      s.m_y = 5;
      s.grid_d = 32;
      s.n_train = s.n_val = s.n_test = 100;
      break;
  }
  return s;
}

std::vector<double> TaskSpec::theta_truth() const {
  switch (task) {
    case TaskKind::pendulum: return {pend_omega};
    case TaskKind::duffing: return {duff_alpha};
    case TaskKind::reactdiff: return {rd_a, rd_b};
  }
  throw std::logic_error("bad task");
}

Shape TaskSpec::x_shape() const {
  if (task == TaskKind::reactdiff) return {2, grid_d, grid_d};
  return {2};
}

Shape TaskSpec::y_shape() const {
  Shape s = x_shape();
  s.insert(s.begin(), m_y);
  return s;
}

void TaskSpec::validate() const {
  if (fine_dt <= 0.0 || subsample < 1 || m_y < 1) throw std::invalid_argument("task spec: bad time grid");
  if (n_train < 1 || n_val < 1 || n_test < 1) throw std::invalid_argument("task spec: empty split");
  if (noise_std < 0.0) throw std::invalid_argument("task spec: negative noise std");
  if (task == TaskKind::reactdiff && grid_d < 3) throw std::invalid_argument("task spec: grid too small");
  if (rtol <= 0.0 || atol <= 0.0) throw std::invalid_argument("task spec: tolerances must be positive");
}

PlainField true_field(const TaskSpec& spec) {
  switch (spec.task) {
    case TaskKind::pendulum: {
      const double gamma = spec.pend_gamma;
      const double c = std::pow(2.0 * std::numbers::pi * spec.pend_omega, 2.0);
      return [gamma, c](const Tensor& s) {
        Tensor d(s.shape());
        d[0] = s[1];
        d[1] = -gamma * s[1] - c * std::sin(s[0]);
        return d;
      };
    }
    case TaskKind::duffing: {
      const double a = spec.duff_alpha, b = spec.duff_beta, g = spec.duff_damping;
      return [a, b, g](const Tensor& s) {
        Tensor d(s.shape());
        d[0] = s[1];
        d[1] = -g * s[1] - a * s[0] + b * s[0] * s[0] * s[0];
        return d;
      };
    }
    case TaskKind::reactdiff: {
      const double a = spec.rd_a, b = spec.rd_b, k = spec.rd_kappa;
      const double h = 2.0 / static_cast<double>(spec.grid_d);
      const Boundary bc = spec.bc;
      return [a, b, k, h, bc](const Tensor& s) {
        const std::int64_t n = s.dim(2) * s.dim(3);
        Tensor lap = ops::laplacian5(s, h, bc);
        Tensor d(s.shape());
        const double* u = s.data();
        const double* v = s.data() + n;
        const double* lu = lap.data();
        const double* lv = lap.data() + n;
        double* du = d.data();
        double* dv = d.data() + n;
        for (std::int64_t i = 0; i < n; ++i) {
          du[i] = a * lu[i] + u[i] - u[i] * u[i] * u[i] - k - v[i];
          dv[i] = b * lv[i] + u[i] - v[i];
        }
        return d;
      };
    }
  }
  throw std::logic_error("bad task");
}

namespace {

constexpr std::uint64_t kSplitTrain = 0, kSplitVal = 1, kSplitTest = 2, kNoiseStream = 0xFF;

std::uint64_t split_index(const std::string& split) {
  if (split == "train") return kSplitTrain;
  if (split == "val") return kSplitVal;
  if (split == "test") return kSplitTest;
  throw std::invalid_argument("unknown split '" + split + "'");
}

std::vector<double> fine_times(const TaskSpec& spec) {
  const std::int64_t n = spec.m_y * spec.subsample;
  std::vector<double> t(static_cast<std::size_t>(n));
  for (std::int64_t j = 0; j < n; ++j) t[static_cast<std::size_t>(j)] = spec.fine_dt * static_cast<double>(j + 1);
  return t;
}

// Integrates one trajectory and writes x (t=0) and the m_y subsampled states.
void emit_trajectory(const TaskSpec& spec, const PlainField& field, const Tensor& x0,
                     const std::vector<double>& times, double* x_dst, double* y_dst, std::int64_t state_n) {
  const auto states = integrate_rk45(field, x0, times, Rk45Options{spec.rtol, spec.atol});
  std::memcpy(x_dst, x0.data(), static_cast<std::size_t>(state_n) * sizeof(double));
  for (std::int64_t kk = 1; kk <= spec.m_y; ++kk) {
    const auto& s = states[static_cast<std::size_t>(kk * spec.subsample - 1)];
    std::memcpy(y_dst + (kk - 1) * state_n, s.data(), static_cast<std::size_t>(state_n) * sizeof(double));
  }
}

std::int64_t split_count(const TaskSpec& spec, const std::string& split) {
  switch (split_index(split)) {
    case kSplitTrain: return spec.n_train;
    case kSplitVal: return spec.n_val;
    default: return spec.n_test;
  }
}

Dataset finish(Dataset ds, std::uint64_t seed, const std::string& split) {
  const std::uint64_t noise_seed = derive_seed(seed, kNoiseStream, split_index(split));
  const double std = ds.spec.noise_std;
  return add_noise(std::move(ds), std, noise_seed);
}

}  // namespace

Dataset gen_pendulum(const TaskSpec& spec, const std::string& split, std::uint64_t seed) {
  spec.validate();
  const std::int64_t n = split_count(spec, split);
  Dataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.split = split;
  ds.x_clean = Tensor({n, 2});
  Shape ys = spec.y_shape();
  ys.insert(ys.begin(), n);
  ds.y_clean = Tensor(ys);
  const auto times = fine_times(spec);
  const PlainField field = true_field(spec);
  const std::uint64_t sidx = split_index(split);
  for (std::int64_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, sidx, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> u(-std::numbers::pi / 2.0, std::numbers::pi / 2.0);
    Tensor x0({2}, {u(rng), u(rng)});
    try {
      emit_trajectory(spec, field, x0, times, ds.x_clean.data() + i * 2, ds.y_clean.data() + i * spec.m_y * 2, 2);
    } catch (const std::exception& e) {
      throw std::runtime_error("gen_pendulum: trajectory " + std::to_string(i) + ": " + e.what());
    }
  }
  return finish(std::move(ds), seed, split);
}

Dataset gen_duffing(const TaskSpec& spec, const std::string& split, std::uint64_t seed) {
  spec.validate();
  const std::int64_t n = split_count(spec, split);
  Dataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.split = split;
  ds.x_clean = Tensor({n, 2});
  Shape ys = spec.y_shape();
  ys.insert(ys.begin(), n);
  ds.y_clean = Tensor(ys);
  const auto times = fine_times(spec);
  const PlainField field = true_field(spec);
  const std::uint64_t sidx = split_index(split);
  for (std::int64_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, sidx, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    bool accepted = false;
    for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
      Tensor x0({2}, {u(rng), u(rng)});
      std::vector<Tensor> states;
      try {
        states = integrate_rk45(field, x0, times, Rk45Options{spec.rtol, spec.atol});
      } catch (const std::exception& e) {
        throw std::runtime_error("gen_duffing: trajectory " + std::to_string(i) + ": " + e.what());
      }
      // reject trajectories that leave the double-well basin
      bool inside = true;
      for (const auto& s : states) {
        if (std::abs(s[0]) > 10.0) {
          inside = false;
          break;
        }
      }
      if (!inside) {
        ++ds.rejected;
        continue;
      }
      std::memcpy(ds.x_clean.data() + i * 2, x0.data(), 2 * sizeof(double));
      for (std::int64_t kk = 1; kk <= spec.m_y; ++kk) {
        const auto& s = states[static_cast<std::size_t>(kk * spec.subsample - 1)];
        std::memcpy(ds.y_clean.data() + (i * spec.m_y + kk - 1) * 2, s.data(), 2 * sizeof(double));
      }
      accepted = true;
    }
    if (!accepted) throw std::runtime_error("gen_duffing: trajectory " + std::to_string(i) + " rejected 1000 times");
  }
  return finish(std::move(ds), seed, split);
}

Dataset gen_reactdiff(const TaskSpec& spec, const std::string& split, std::uint64_t seed) {
  spec.validate();
  const std::int64_t n = split_count(spec, split);
  const std::int64_t d = spec.grid_d;
  const std::int64_t state_n = 2 * d * d;
  Dataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.split = split;
  ds.x_clean = Tensor({n, 2, d, d});
  Shape ys = spec.y_shape();
  ys.insert(ys.begin(), n);
  ds.y_clean = Tensor(ys);
  const auto times = fine_times(spec);
  const PlainField field = true_field(spec);
  const std::uint64_t sidx = split_index(split);
  for (std::int64_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, sidx, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor x0({1, 2, d, d});
    for (std::int64_t j = 0; j < state_n; ++j) x0[j] = u(rng);
    try {
      emit_trajectory(spec, field, x0, times, ds.x_clean.data() + i * state_n,
                      ds.y_clean.data() + i * spec.m_y * state_n, state_n);
    } catch (const std::exception& e) {
      throw std::runtime_error("gen_reactdiff: trajectory " + std::to_string(i) + ": " + e.what());
    }
  }
  return finish(std::move(ds), seed, split);
}

DatasetTriple generate(const TaskSpec& spec, std::uint64_t seed) {
  auto gen = [&](const std::string& split) {
    switch (spec.task) {
      case TaskKind::pendulum: return gen_pendulum(spec, split, seed);
      case TaskKind::duffing: return gen_duffing(spec, split, seed);
      case TaskKind::reactdiff: return gen_reactdiff(spec, split, seed);
    }
    throw std::logic_error("bad task");
  };
  return DatasetTriple{gen("train"), gen("val"), gen("test")};
}

Dataset add_noise(Dataset ds, double std, std::uint64_t noise_seed) {
  if (std < 0.0) throw std::invalid_argument("add_noise: negative std");
  ds.x = ds.x_clean;
  ds.y = ds.y_clean;
  if (std == 0.0) return ds;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, std);
  if (ds.spec.noise_on_x) {
    for (std::int64_t i = 0; i < ds.x.numel(); ++i) ds.x[i] += gauss(rng);
  }
  for (std::int64_t i = 0; i < ds.y.numel(); ++i) ds.y[i] += gauss(rng);
  return ds;
}

namespace {

json spec_to_json(const TaskSpec& s) { return detail::task_spec_to_json(s); }

TaskSpec spec_from_json(const json& j) { return detail::task_spec_from_json(j); }

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.raw("HSDT", 4);
  w.pod<std::uint32_t>(kDatasetFormatVersion);
  w.pod<std::uint64_t>(ds.seed);
  w.str(ds.split);
  w.str(spec_to_json(ds.spec).dump());
  w.pod<std::int64_t>(ds.rejected);
  w.tensor(ds.x);
  w.tensor(ds.y);
  w.tensor(ds.x_clean);
  w.tensor(ds.y_clean);
  detail::write_file_crc(path, w.bytes());
}

Dataset load_dataset(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file_crc(path));
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "HSDT", 4) != 0) throw std::runtime_error("not a dataset file: '" + path.string() + "'");
  const auto version = r.pod<std::uint32_t>();
  if (version != kDatasetFormatVersion) {
    throw std::runtime_error("dataset format version " + std::to_string(version) + " unsupported (expected " +
                             std::to_string(kDatasetFormatVersion) + ")");
  }
  Dataset ds;
  ds.seed = r.pod<std::uint64_t>();
  ds.split = r.str();
  ds.spec = spec_from_json(json::parse(r.str()));
  ds.rejected = r.pod<std::int64_t>();
  ds.x = r.tensor();
  ds.y = r.tensor();
  ds.x_clean = r.tensor();
  ds.y_clean = r.tensor();
  return ds;
}

Batch make_batch(const Dataset& ds, std::span<const std::int64_t> indices) {
  const std::int64_t total = ds.size();
  std::vector<std::int64_t> all;
  if (indices.empty()) {
    all.resize(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) all[static_cast<std::size_t>(i)] = i;
    indices = all;
  }
  const std::int64_t b = static_cast<std::int64_t>(indices.size());
  const std::int64_t state_n = shape_numel(ds.spec.x_shape());
  const std::int64_t m_y = ds.spec.m_y;

  Shape xs = ds.spec.x_shape();
  xs.insert(xs.begin(), b);
  Shape ys = ds.spec.x_shape();
  ys.insert(ys.begin(), b);
  ys.insert(ys.begin(), m_y);

  Batch batch;
  batch.x = Tensor(xs);
  batch.y = Tensor(ys);
  for (std::int64_t j = 0; j < b; ++j) {
    const std::int64_t i = indices[static_cast<std::size_t>(j)];
    if (i < 0 || i >= total) throw std::out_of_range("make_batch: index out of range");
    std::memcpy(batch.x.data() + j * state_n, ds.x.data() + i * state_n,
                static_cast<std::size_t>(state_n) * sizeof(double));
    for (std::int64_t t = 0; t < m_y; ++t) {
      std::memcpy(batch.y.data() + (t * b + j) * state_n, ds.y.data() + (i * m_y + t) * state_n,
                  static_cast<std::size_t>(state_n) * sizeof(double));
    }
  }
  return batch;
}

}  // namespace hsam
