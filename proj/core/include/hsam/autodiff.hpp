// Define-by-run reverse-mode autodiff: a Tape records primitive ops as they
// execute; backward() walks the record once and returns gradients for every
// registered leaf. Tapes are rebuilt each iteration and are single-use.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hsam/tensor.hpp"

namespace hsam {

class Tape;

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

enum class Op : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  matmul,
  sum,
  mean,
  relu,
  sin,
  cos,
  pow,
  concat,
  reshape,
  slice,
  conv2d,
  squared_norm,
  batch_norm,
  laplacian5,
};

// Gradients keyed by leaf id. Leaves that are not reachable from the loss
// get an all-zero tensor of the leaf's shape.
class Grad {
 public:
  const Tensor& at(std::int32_t leaf_id) const;
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return names_.count(name) > 0; }

 private:
  friend class Tape;
  std::unordered_map<std::int32_t, Tensor> by_id_;
  std::unordered_map<std::string, std::int32_t> names_;
};

// Running statistics for one batch-norm layer, stored outside the tape so
// they persist across iterations.
struct BatchNormStats {
  std::span<double> mean;
  std::span<double> var;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(const Tensor& value, std::string name);
  Var constant(Tensor value);
  Var constant(double v) { return constant(Tensor::scalar(v)); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var matmul(Var a, Var b);
  Var sum(Var a);
  Var mean(Var a);
  Var relu(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var pow(Var a, double exponent);
  Var concat(std::span<const Var> xs, int axis);
  Var reshape(Var a, Shape shape);
  Var slice(Var a, int axis, std::int64_t start, std::int64_t len);
  Var conv2d(Var x, Var w, std::optional<Var> bias, PadMode pad);
  Var squared_norm(Var a);
  Var scale(Var a, double c) { return mul(a, constant(c)); }
  Var neg(Var a) { return scale(a, -1.0); }

  // Batch norm over all axes except the channel axis (axis 1). In training
  // mode normalizes with batch statistics and updates `stats` in place; in
  // eval mode uses `stats` as-is.
  Var batch_norm(Var x, Var gamma, Var beta, BatchNormStats stats, bool training, double eps = 1e-5,
                 double momentum = 0.1);

  // Five-point-stencil Laplacian on [batch, ch, d, d] fields.
  Var laplacian5(Var f, double h, Boundary bc);

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // One backward pass per recording; the tape is consumed afterwards.
  Grad backward(Var loss);

  // Discard the recording so the tape object can be reused.
  void reset();

 private:
  struct Node {
    Op op;
    Tensor value;
    // Accumulates input adjoints given this node's output adjoint.
    std::function<void(Tape&, const Tensor& dout, std::vector<Tensor>& adj)> vjp;
  };

  Var push(Op op, Tensor value,
           std::function<void(Tape&, const Tensor&, std::vector<Tensor>&)> vjp);
  const Tensor& val(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  static void accumulate(std::vector<Tensor>& adj, std::int32_t id, const Tensor& contribution);
  // Adds `contribution` reduced over broadcast dims onto adj[id] shaped like the input.
  static void accumulate_unbroadcast(std::vector<Tensor>& adj, std::int32_t id, const Shape& input_shape,
                                     const Tensor& contribution);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::int32_t>> leaves_;
  bool consumed_ = false;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar function of the given leaves. When max_coords_per_leaf > 0 only
// a seeded random subset of coordinates is probed (for large parameter
// vectors); otherwise every coordinate is checked.
double grad_check(const std::function<Var(Tape&, std::span<const Var>)>& f, std::span<const Tensor> leaves,
                  double step, std::int64_t max_coords_per_leaf = -1, std::uint64_t coord_seed = 0);

}  // namespace hsam
