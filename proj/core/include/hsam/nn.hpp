// Neural building blocks over the autodiff tape. Parameters live in a
// ParamVector whose flat storage is hard-partitioned into a theta block
// (scientific parameters) and a phi block (neural-net parameters); batch-norm
// running statistics go into a separate non-trainable state block.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "hsam/autodiff.hpp"
#include "hsam/tensor.hpp"

namespace hsam {

enum class Block : std::uint8_t { theta = 0, phi = 1, state = 2 };

struct LayoutEntry {
  std::string name;
  Block block;
  std::int64_t offset;
  Shape shape;

  std::int64_t size() const { return shape_numel(shape); }
};

// Named sub-tensors tiling the theta/phi/state blocks without gaps or overlap.
struct Layout {
  std::vector<LayoutEntry> entries;
  std::int64_t theta_size = 0;
  std::int64_t phi_size = 0;
  std::int64_t state_size = 0;

  const LayoutEntry& find(const std::string& name) const;
  bool has(const std::string& name) const;
  std::int64_t block_size(Block b) const;
  // Appends an entry at the current end of its block and returns it.
  const LayoutEntry& append(const std::string& name, Block block, Shape shape);
  // Verifies entries tile each block exactly; throws otherwise.
  void validate() const;

  bool operator==(const Layout& other) const;
};

struct ParamVector {
  Layout layout;
  Tensor theta;
  Tensor phi;
  Tensor state;

  TensorView view(const std::string& name);
  Tensor read(const std::string& name) const;
  void write(const std::string& name, const Tensor& t);
  Tensor& block(Block b);
  const Tensor& block(Block b) const;
};

struct MlpSpec {
  std::int64_t input_dim = 0;
  std::vector<std::int64_t> hidden_dims;
  std::int64_t output_dim = 0;

  std::vector<std::int64_t> layer_dims() const;
};

struct ConvNetSpec {
  std::int64_t in_channels = 0;
  std::vector<std::int64_t> hidden_channels;
  std::int64_t out_channels = 0;
  std::int64_t kernel_size = 3;
  bool use_batchnorm = true;
  PadMode padding = PadMode::zero;

  std::vector<std::int64_t> channel_dims() const;
};

// Scientific-parameter initialization: a fixed vector or a per-component
// uniform draw from documented ranges.
struct ThetaInit {
  enum class Policy { fixed, uniform };
  Policy policy = Policy::fixed;
  std::vector<double> values;                     // fixed
  std::vector<std::pair<double, double>> ranges;  // uniform
};

struct ThetaSpec {
  std::vector<std::string> names;  // stored in layout as "theta.<name>"
};

using NeuralLayout = std::variant<std::monostate, MlpSpec, ConvNetSpec>;

// Builds the layout (theta entries first, then phi/state per the neural spec)
// and fills it: phi weights Kaiming-uniform with zero biases, batch-norm
// gamma=1/beta=0 with running mean 0 / var 1, theta per policy. Deterministic
// given the seed.
ParamVector init_params(const ThetaSpec& theta_spec, const NeuralLayout& neural, const ThetaInit& theta_init,
                        std::uint64_t seed);

double kaiming_uniform_bound(std::int64_t fan_in);

// Tape-side access to a ParamVector: theta and phi registered as two flat
// leaves, named sub-tensors sliced out on demand. Slices are cached per view
// so repeated field evaluations on one tape reuse the same nodes.
struct ParamsView {
  Tape* tape = nullptr;
  ParamVector* pv = nullptr;
  Var theta;
  Var phi;
  std::shared_ptr<std::unordered_map<std::string, Var>> slice_cache;

  Var param(const std::string& name) const;
};

ParamsView make_view(Tape& tape, ParamVector& pv);

Var mlp_forward(Tape& tape, const MlpSpec& spec, const ParamsView& view, Var x);

// Spatial size is preserved (same padding). In training mode batch norm uses
// batch statistics and updates the running stats stored in the ParamVector.
Var convnet_forward(Tape& tape, const ConvNetSpec& spec, const ParamsView& view, Var x, bool training);

}  // namespace hsam
