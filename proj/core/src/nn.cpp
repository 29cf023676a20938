#include "hsam/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "hsam/rng.hpp"

namespace hsam {

const LayoutEntry& Layout::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw std::out_of_range("layout: unknown parameter name '" + name + "'");
}

bool Layout::has(const std::string& name) const {
  return std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.name == name; });
}

std::int64_t Layout::block_size(Block b) const {
  switch (b) {
    case Block::theta: return theta_size;
    case Block::phi: return phi_size;
    case Block::state: return state_size;
  }
  return 0;
}

const LayoutEntry& Layout::append(const std::string& name, Block block, Shape shape) {
  if (has(name)) throw std::invalid_argument("layout: duplicate parameter name '" + name + "'");
  std::int64_t* size = block == Block::theta ? &theta_size : block == Block::phi ? &phi_size : &state_size;
  entries.push_back(LayoutEntry{name, block, *size, std::move(shape)});
  *size += entries.back().size();
  return entries.back();
}

void Layout::validate() const {
  std::int64_t sums[3] = {0, 0, 0};
  for (const auto& e : entries) {
    const auto b = static_cast<std::size_t>(e.block);
    if (e.offset != sums[b]) {
      throw std::logic_error("layout: entry '" + e.name + "' does not tile its block contiguously");
    }
    sums[b] += e.size();
  }
  if (sums[0] != theta_size || sums[1] != phi_size || sums[2] != state_size) {
    throw std::logic_error("layout: block sizes do not match entry tiling");
  }
}

bool Layout::operator==(const Layout& other) const {
  if (theta_size != other.theta_size || phi_size != other.phi_size || state_size != other.state_size ||
      entries.size() != other.entries.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = other.entries[i];
    if (a.name != b.name || a.block != b.block || a.offset != b.offset || a.shape != b.shape) return false;
  }
  return true;
}

Tensor& ParamVector::block(Block b) {
  switch (b) {
    case Block::theta: return theta;
    case Block::phi: return phi;
    case Block::state: return state;
  }
  throw std::logic_error("bad block");
}

const Tensor& ParamVector::block(Block b) const {
  return const_cast<ParamVector*>(this)->block(b);
}

TensorView ParamVector::view(const std::string& name) {
  const LayoutEntry& e = layout.find(name);
  Tensor& blk = block(e.block);
  return TensorView{std::span<double>(blk.data() + e.offset, static_cast<std::size_t>(e.size())), e.shape};
}

Tensor ParamVector::read(const std::string& name) const {
  const LayoutEntry& e = layout.find(name);
  const Tensor& blk = block(e.block);
  return Tensor(e.shape, {blk.data() + e.offset, blk.data() + e.offset + e.size()});
}

void ParamVector::write(const std::string& name, const Tensor& t) {
  TensorView v = view(name);
  v.assign(t);
}

std::vector<std::int64_t> MlpSpec::layer_dims() const {
  std::vector<std::int64_t> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(output_dim);
  return dims;
}

std::vector<std::int64_t> ConvNetSpec::channel_dims() const {
  std::vector<std::int64_t> dims;
  dims.push_back(in_channels);
  dims.insert(dims.end(), hidden_channels.begin(), hidden_channels.end());
  dims.push_back(out_channels);
  return dims;
}

double kaiming_uniform_bound(std::int64_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

namespace {

void build_mlp_layout(Layout& layout, const MlpSpec& spec) {
  if (spec.input_dim <= 0 || spec.output_dim <= 0) {
    throw std::invalid_argument("mlp spec: input and output dims must be positive");
  }
  const auto dims = spec.layer_dims();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::string base = "phi.l" + std::to_string(l);
    layout.append(base + ".weight", Block::phi, {dims[l], dims[l + 1]});
    layout.append(base + ".bias", Block::phi, {dims[l + 1]});
  }
}

void build_conv_layout(Layout& layout, const ConvNetSpec& spec) {
  if (spec.kernel_size % 2 == 0 || spec.kernel_size <= 0) {
    throw std::invalid_argument("conv spec: kernel size must be odd and positive");
  }
  if (spec.in_channels <= 0 || spec.out_channels <= 0) {
    throw std::invalid_argument("conv spec: channel counts must be positive");
  }
  const auto chans = spec.channel_dims();
  for (std::size_t l = 0; l + 1 < chans.size(); ++l) {
    const std::string base = "phi.c" + std::to_string(l);
    layout.append(base + ".weight", Block::phi, {chans[l + 1], chans[l], spec.kernel_size, spec.kernel_size});
    layout.append(base + ".bias", Block::phi, {chans[l + 1]});
    // batch norm after each hidden layer only
    if (spec.use_batchnorm && l + 2 < chans.size()) {
      layout.append(base + ".bn.gamma", Block::phi, {chans[l + 1]});
      layout.append(base + ".bn.beta", Block::phi, {chans[l + 1]});
      layout.append(base + ".bn.mean", Block::state, {chans[l + 1]});
      layout.append(base + ".bn.var", Block::state, {chans[l + 1]});
    }
  }
}

}  // namespace

ParamVector init_params(const ThetaSpec& theta_spec, const NeuralLayout& neural, const ThetaInit& theta_init,
                        std::uint64_t seed) {
  ParamVector pv;
  for (const auto& n : theta_spec.names) pv.layout.append("theta." + n, Block::theta, {1});
  if (std::holds_alternative<MlpSpec>(neural)) {
    build_mlp_layout(pv.layout, std::get<MlpSpec>(neural));
  } else if (std::holds_alternative<ConvNetSpec>(neural)) {
    build_conv_layout(pv.layout, std::get<ConvNetSpec>(neural));
  }
  pv.layout.validate();
  pv.theta = Tensor({pv.layout.theta_size});
  pv.phi = Tensor({pv.layout.phi_size});
  pv.state = Tensor({pv.layout.state_size});

  // theta
  const std::int64_t n_theta = pv.layout.theta_size;
  switch (theta_init.policy) {
    case ThetaInit::Policy::fixed: {
      if (static_cast<std::int64_t>(theta_init.values.size()) != n_theta) {
        throw std::invalid_argument("theta init: fixed policy needs " + std::to_string(n_theta) + " values, got " +
                                    std::to_string(theta_init.values.size()));
      }
      std::copy(theta_init.values.begin(), theta_init.values.end(), pv.theta.data());
      break;
    }
    case ThetaInit::Policy::uniform: {
      if (static_cast<std::int64_t>(theta_init.ranges.size()) != n_theta) {
        throw std::invalid_argument("theta init: uniform policy needs " + std::to_string(n_theta) + " ranges, got " +
                                    std::to_string(theta_init.ranges.size()));
      }
      std::mt19937_64 rng(derive_seed(seed, 0xA1));
      for (std::int64_t i = 0; i < n_theta; ++i) {
        const auto [lo, hi] = theta_init.ranges[static_cast<std::size_t>(i)];
        std::uniform_real_distribution<double> u(lo, hi);
        pv.theta[i] = u(rng);
      }
      break;
    }
  }

  // phi, in layout order
  std::mt19937_64 rng(derive_seed(seed, 0xB2));
  for (const auto& e : pv.layout.entries) {
    if (e.block == Block::phi && e.name.ends_with(".weight")) {
      std::int64_t fan_in = 0;
      if (e.shape.size() == 2) {
        fan_in = e.shape[0];
      } else if (e.shape.size() == 4) {
        fan_in = e.shape[1] * e.shape[2] * e.shape[3];
      } else {
        throw std::logic_error("unexpected weight rank");
      }
      const double bound = kaiming_uniform_bound(fan_in);
      std::uniform_real_distribution<double> u(-bound, bound);
      double* p = pv.phi.data() + e.offset;
      for (std::int64_t i = 0; i < e.size(); ++i) p[i] = u(rng);
    } else if (e.block == Block::phi && e.name.ends_with(".bn.gamma")) {
      double* p = pv.phi.data() + e.offset;
      std::fill(p, p + e.size(), 1.0);
    } else if (e.block == Block::state && e.name.ends_with(".bn.var")) {
      double* p = pv.state.data() + e.offset;
      std::fill(p, p + e.size(), 1.0);
    }
    // biases, bn.beta, bn.mean stay zero
  }
  return pv;
}

Var ParamsView::param(const std::string& name) const {
  if (slice_cache) {
    auto it = slice_cache->find(name);
    if (it != slice_cache->end()) return it->second;
  }
  const LayoutEntry& e = pv->layout.find(name);
  if (e.block == Block::state) throw std::invalid_argument("param: '" + name + "' is run-time state, not a parameter");
  Var blk = e.block == Block::theta ? theta : phi;
  Var out = tape->slice(blk, 0, e.offset, e.size());
  if (e.shape.size() > 1) out = tape->reshape(out, e.shape);
  if (slice_cache) slice_cache->emplace(name, out);
  return out;
}

ParamsView make_view(Tape& tape, ParamVector& pv) {
  ParamsView v;
  v.tape = &tape;
  v.pv = &pv;
  v.theta = tape.leaf(pv.theta, "theta");
  v.phi = tape.leaf(pv.phi, "phi");
  v.slice_cache = std::make_shared<std::unordered_map<std::string, Var>>();
  return v;
}

Var mlp_forward(Tape& tape, const MlpSpec& spec, const ParamsView& view, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2 || xv.dim(1) != spec.input_dim) {
    throw std::invalid_argument("mlp_forward: input " + shape_str(xv.shape()) + " incompatible with input_dim " +
                                std::to_string(spec.input_dim));
  }
  const auto dims = spec.layer_dims();
  Var h = x;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::string base = "phi.l" + std::to_string(l);
    Var w = view.param(base + ".weight");
    Var b = view.param(base + ".bias");
    h = tape.add(tape.matmul(h, w), b);
    if (l + 2 < dims.size()) h = tape.relu(h);
  }
  return h;
}

Var convnet_forward(Tape& tape, const ConvNetSpec& spec, const ParamsView& view, Var x, bool training) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 4 || xv.dim(1) != spec.in_channels) {
    throw std::invalid_argument("convnet_forward: input " + shape_str(xv.shape()) +
                                " incompatible with in_channels " + std::to_string(spec.in_channels));
  }
  if (xv.dim(2) < spec.kernel_size || xv.dim(3) < spec.kernel_size) {
    throw std::invalid_argument("convnet_forward: spatial size " + shape_str(xv.shape()) + " below kernel size " +
                                std::to_string(spec.kernel_size));
  }
  const auto chans = spec.channel_dims();
  Var h = x;
  for (std::size_t l = 0; l + 1 < chans.size(); ++l) {
    const std::string base = "phi.c" + std::to_string(l);
    Var w = view.param(base + ".weight");
    Var b = view.param(base + ".bias");
    h = tape.conv2d(h, w, b, spec.padding);
    if (l + 2 < chans.size()) {
      if (spec.use_batchnorm) {
        Var gamma = view.param(base + ".bn.gamma");
        Var beta = view.param(base + ".bn.beta");
        TensorView mean = view.pv->view(base + ".bn.mean");
        TensorView var = view.pv->view(base + ".bn.var");
        h = tape.batch_norm(h, gamma, beta, BatchNormStats{mean.data, var.data}, training);
      }
      h = tape.relu(h);
    }
  }
  return h;
}

}  // namespace hsam
