#include "hsam/autodiff.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace hsam {

namespace {

// out = A @ B^T, A: [m,k], B: [n,k] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor out({m, n});
  if (m && k && n) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), 1.0, a.data(), static_cast<int>(k), b.data(), static_cast<int>(k), 0.0,
                out.data(), static_cast<int>(n));
  }
  return out;
}

// out = A^T @ B, A: [k,m], B: [k,n] -> [m,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const auto k = a.dim(0), m = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  if (m && k && n) {
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), 1.0, a.data(), static_cast<int>(m), b.data(), static_cast<int>(n), 0.0,
                out.data(), static_cast<int>(n));
  }
  return out;
}

inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

}  // namespace

const Tensor& Grad::at(std::int32_t leaf_id) const {
  auto it = by_id_.find(leaf_id);
  if (it == by_id_.end()) throw std::out_of_range("grad: unknown leaf id " + std::to_string(leaf_id));
  return it->second;
}

const Tensor& Grad::at(const std::string& name) const {
  auto it = names_.find(name);
  if (it == names_.end()) throw std::out_of_range("grad: unknown leaf name '" + name + "'");
  return at(it->second);
}

Var Tape::push(Op op, Tensor value, std::function<void(Tape&, const Tensor&, std::vector<Tensor>&)> vjp) {
  if (consumed_) throw std::runtime_error("tape: recording onto a consumed tape; call reset() first");
  nodes_.push_back(Node{op, std::move(value), std::move(vjp)});
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(std::vector<Tensor>& adj, std::int32_t id, const Tensor& contribution) {
  Tensor& slot = adj[static_cast<std::size_t>(id)];
  if (slot.numel() == 0 && contribution.numel() != 0) {
    slot = contribution;
    return;
  }
  for (std::int64_t i = 0; i < slot.numel(); ++i) slot[i] += contribution[i];
}

void Tape::accumulate_unbroadcast(std::vector<Tensor>& adj, std::int32_t id, const Shape& input_shape,
                                  const Tensor& contribution) {
  const std::int64_t n_in = shape_numel(input_shape);
  if (contribution.numel() == n_in) {
    Tensor c(input_shape, contribution.vec());
    accumulate(adj, id, c);
    return;
  }
  Tensor reduced(input_shape);
  if (n_in == 1) {
    double s = 0.0;
    for (std::int64_t i = 0; i < contribution.numel(); ++i) s += contribution[i];
    reduced[0] = s;
  } else {
    // trailing-dim broadcast: sum over the leading axes
    for (std::int64_t i = 0; i < contribution.numel(); ++i) reduced[i % n_in] += contribution[i];
  }
  accumulate(adj, id, reduced);
}

Var Tape::leaf(const Tensor& value, std::string name) {
  Var v = push(Op::leaf, value, nullptr);
  leaves_.emplace_back(std::move(name), v.id);
  return v;
}

Var Tape::constant(Tensor value) { return push(Op::constant, std::move(value), nullptr); }

const Tensor& Tape::value(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::out_of_range("tape: invalid var id");
  }
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

Var Tape::add(Var a, Var b) {
  Tensor out = ops::add(val(a.id), val(b.id));
  const Shape sa = val(a.id).shape(), sb = val(b.id).shape();
  return push(Op::add, std::move(out), [a, b, sa, sb](Tape&, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate_unbroadcast(adj, a.id, sa, dout);
    accumulate_unbroadcast(adj, b.id, sb, dout);
  });
}

Var Tape::sub(Var a, Var b) {
  Tensor out = ops::sub(val(a.id), val(b.id));
  const Shape sa = val(a.id).shape(), sb = val(b.id).shape();
  return push(Op::sub, std::move(out), [a, b, sa, sb](Tape&, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate_unbroadcast(adj, a.id, sa, dout);
    accumulate_unbroadcast(adj, b.id, sb, ops::scale(dout, -1.0));
  });
}

Var Tape::mul(Var a, Var b) {
  Tensor out = ops::mul(val(a.id), val(b.id));
  const Shape sa = val(a.id).shape(), sb = val(b.id).shape();
  return push(Op::mul, std::move(out), [a, b, sa, sb](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate_unbroadcast(adj, a.id, sa, ops::mul(dout, t.val(b.id)));
    accumulate_unbroadcast(adj, b.id, sb, ops::mul(dout, t.val(a.id)));
  });
}

Var Tape::div(Var a, Var b) {
  Tensor out = ops::div(val(a.id), val(b.id));
  const Shape sa = val(a.id).shape(), sb = val(b.id).shape();
  return push(Op::div, std::move(out), [a, b, sa, sb](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
    const Tensor& bv = t.val(b.id);
    accumulate_unbroadcast(adj, a.id, sa, ops::div(dout, bv));
    // d/db (a/b) = -a / b^2
    Tensor g = ops::mul(dout, t.val(a.id));
    g = ops::div(g, ops::mul(bv, bv));
    accumulate_unbroadcast(adj, b.id, sb, ops::scale(g, -1.0));
  });
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = ops::matmul(val(a.id), val(b.id));
  return push(Op::matmul, std::move(out), [a, b](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate(adj, a.id, matmul_nt(dout, t.val(b.id)));
    accumulate(adj, b.id, matmul_tn(t.val(a.id), dout));
  });
}

Var Tape::sum(Var a) {
  Tensor out = ops::sum(val(a.id));
  const Shape sa = val(a.id).shape();
  return push(Op::sum, std::move(out), [a, sa](Tape&, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate(adj, a.id, Tensor::full(sa, dout.item()));
  });
}

Var Tape::mean(Var a) {
  Tensor out = ops::mean(val(a.id));
  const Shape sa = val(a.id).shape();
  const double inv_n = 1.0 / static_cast<double>(val(a.id).numel());
  return push(Op::mean, std::move(out), [a, sa, inv_n](Tape&, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate(adj, a.id, Tensor::full(sa, dout.item() * inv_n));
  });
}

Var Tape::relu(Var a) {
  Tensor out = ops::relu(val(a.id));
  return push(Op::relu, std::move(out), [a](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
    const Tensor& x = t.val(a.id);
    Tensor g(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) g[i] = x[i] > 0.0 ? dout[i] : 0.0;
    accumulate(adj, a.id, g);
  });
}

Var Tape::sin(Var a) {
  Tensor out = ops::sin(val(a.id));
  return push(Op::sin, std::move(out), [a](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate(adj, a.id, ops::mul(dout, ops::cos(t.val(a.id))));
  });
}

Var Tape::cos(Var a) {
  Tensor out = ops::cos(val(a.id));
  return push(Op::cos, std::move(out), [a](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate(adj, a.id, ops::scale(ops::mul(dout, ops::sin(t.val(a.id))), -1.0));
  });
}

Var Tape::pow(Var a, double exponent) {
  Tensor out = ops::pow(val(a.id), exponent);
  return push(Op::pow, std::move(out), [a, exponent](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
    const Tensor& x = t.val(a.id);
    Tensor g(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      g[i] = dout[i] * exponent * std::pow(x[i], exponent - 1.0);
    }
    accumulate(adj, a.id, g);
  });
}

Var Tape::concat(std::span<const Var> xs, int axis) {
  std::vector<const Tensor*> ins;
  ins.reserve(xs.size());
  for (Var v : xs) ins.push_back(&val(v.id));
  Tensor out = ops::concat(ins, axis);
  std::vector<Var> inputs(xs.begin(), xs.end());
  return push(Op::concat, std::move(out), [inputs, axis](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
    std::int64_t off = 0;
    for (Var v : inputs) {
      const std::int64_t len = t.val(v.id).dim(axis);
      accumulate(adj, v.id, ops::slice(dout, axis, off, len));
      off += len;
    }
  });
}

Var Tape::reshape(Var a, Shape shape) {
  Tensor out = ops::reshape(val(a.id), std::move(shape));
  const Shape sa = val(a.id).shape();
  return push(Op::reshape, std::move(out), [a, sa](Tape&, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate(adj, a.id, Tensor(sa, dout.vec()));
  });
}

Var Tape::slice(Var a, int axis, std::int64_t start, std::int64_t len) {
  Tensor out = ops::slice(val(a.id), axis, start, len);
  const Shape sa = val(a.id).shape();
  return push(Op::slice, std::move(out),
              [a, sa, axis, start, len](Tape&, const Tensor& dout, std::vector<Tensor>& adj) {
                Tensor g(sa);
                std::int64_t outer = 1, inner = 1;
                const std::int64_t ax = sa[static_cast<std::size_t>(axis)];
                for (int d = 0; d < axis; ++d) outer *= sa[static_cast<std::size_t>(d)];
                for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < sa.size(); ++d) inner *= sa[d];
                for (std::int64_t o = 0; o < outer; ++o) {
                  const double* src = dout.data() + o * len * inner;
                  double* dst = g.data() + (o * ax + start) * inner;
                  std::copy(src, src + len * inner, dst);
                }
                accumulate(adj, a.id, g);
              });
}

Var Tape::squared_norm(Var a) {
  Tensor out = ops::squared_norm(val(a.id));
  return push(Op::squared_norm, std::move(out), [a](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate(adj, a.id, ops::scale(t.val(a.id), 2.0 * dout.item()));
  });
}

Var Tape::conv2d(Var x, Var w, std::optional<Var> bias, PadMode pad) {
  const Tensor* bp = bias ? &val(bias->id) : nullptr;
  Tensor out = ops::conv2d(val(x.id), val(w.id), bp, pad);
  return push(Op::conv2d, std::move(out),
              [x, w, bias, pad](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
                const Tensor& xv = t.val(x.id);
                const Tensor& wv = t.val(w.id);
                const std::int64_t b = xv.dim(0), ic = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
                const std::int64_t oc = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
                const std::int64_t ph = kh / 2, pw = kw / 2;
                Tensor dx(xv.shape());
                Tensor dw(wv.shape());
                // acc_row keeps the weight-gradient reduction vectorizable;
                // the index-ordered final sum stays deterministic
                std::vector<double> acc_row(static_cast<std::size_t>(wd));
                for (std::int64_t n = 0; n < b; ++n) {
                  for (std::int64_t o = 0; o < oc; ++o) {
                    const double* dor = dout.data() + (n * oc + o) * h * wd;
                    for (std::int64_t c = 0; c < ic; ++c) {
                      const double* src = xv.data() + (n * ic + c) * h * wd;
                      double* dsr = dx.data() + (n * ic + c) * h * wd;
                      const double* ker = wv.data() + (o * ic + c) * kh * kw;
                      double* dker = dw.data() + (o * ic + c) * kh * kw;
                      for (std::int64_t ky = 0; ky < kh; ++ky) {
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                          const double kv = ker[ky * kw + kx];
                          const std::int64_t dy = ky - ph, dxo = kx - pw;
                          std::fill(acc_row.begin(), acc_row.end(), 0.0);
                          for (std::int64_t y = 0; y < h; ++y) {
                            std::int64_t sy = y + dy;
                            if (sy < 0 || sy >= h) {
                              if (pad == PadMode::zero) continue;
                              sy = reflect_index(sy, h);
                            }
                            const double* srow = src + sy * wd;
                            double* dsrow = dsr + sy * wd;
                            const double* drow = dor + y * wd;
                            const std::int64_t x_lo = std::max<std::int64_t>(0, -dxo);
                            const std::int64_t x_hi = std::min<std::int64_t>(wd, wd - dxo);
                            if (pad == PadMode::zero) {
                              double* acc = acc_row.data();
                              for (std::int64_t xx = x_lo; xx < x_hi; ++xx) {
                                acc[xx] += srow[xx + dxo] * drow[xx];
                                dsrow[xx + dxo] += kv * drow[xx];
                              }
                            } else {
                              for (std::int64_t xx = 0; xx < wd; ++xx) {
                                const std::int64_t sx = (xx + dxo < 0 || xx + dxo >= wd)
                                                            ? reflect_index(xx + dxo, wd)
                                                            : xx + dxo;
                                acc_row[static_cast<std::size_t>(xx)] += srow[sx] * drow[xx];
                                dsrow[sx] += kv * drow[xx];
                              }
                            }
                          }
                          double kacc = 0.0;
                          for (std::int64_t xx = 0; xx < wd; ++xx) kacc += acc_row[static_cast<std::size_t>(xx)];
                          dker[ky * kw + kx] += kacc;
                        }
                      }
                    }
                  }
                }
                accumulate(adj, x.id, dx);
                accumulate(adj, w.id, dw);
                if (bias) {
                  Tensor db({oc});
                  for (std::int64_t n = 0; n < b; ++n) {
                    for (std::int64_t o = 0; o < oc; ++o) {
                      const double* dor = dout.data() + (n * oc + o) * h * wd;
                      double s = 0.0;
                      for (std::int64_t i = 0; i < h * wd; ++i) s += dor[i];
                      db[o] += s;
                    }
                  }
                  accumulate(adj, bias->id, db);
                }
              });
}

Var Tape::batch_norm(Var x, Var gamma, Var beta, BatchNormStats stats, bool training, double eps,
                     double momentum) {
  const Tensor& xv = val(x.id);
  if (xv.rank() < 2) throw std::invalid_argument("batch_norm: input must have a channel axis, got " + shape_str(xv.shape()));
  const std::int64_t b = xv.dim(0), c = xv.dim(1);
  std::int64_t inner = 1;
  for (int d = 2; d < xv.rank(); ++d) inner *= xv.dim(d);
  const std::int64_t n_red = b * inner;  // reduce over batch and spatial axes
  if (static_cast<std::int64_t>(stats.mean.size()) != c || static_cast<std::int64_t>(stats.var.size()) != c) {
    throw std::invalid_argument("batch_norm: running stats length != channels");
  }
  if (training && b == 1) {
    throw std::invalid_argument("batch_norm: batch of size 1 in training mode has undefined variance normalization");
  }
  const Tensor& gv = val(gamma.id);
  const Tensor& bv = val(beta.id);
  if (gv.numel() != c || bv.numel() != c) throw std::invalid_argument("batch_norm: gamma/beta length != channels");

  std::vector<double> mu(static_cast<std::size_t>(c)), invstd(static_cast<std::size_t>(c));
  if (training) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::int64_t n = 0; n < b; ++n) {
        const double* p = xv.data() + (n * c + ch) * inner;
        for (std::int64_t i = 0; i < inner; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(n_red);
      double v = 0.0;
      for (std::int64_t n = 0; n < b; ++n) {
        const double* p = xv.data() + (n * c + ch) * inner;
        for (std::int64_t i = 0; i < inner; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double var_b = v / static_cast<double>(n_red);
      mu[static_cast<std::size_t>(ch)] = m;
      invstd[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(var_b + eps);
      // running stats use the unbiased variance
      const double var_u = n_red > 1 ? v / static_cast<double>(n_red - 1) : var_b;
      stats.mean[static_cast<std::size_t>(ch)] = (1.0 - momentum) * stats.mean[static_cast<std::size_t>(ch)] + momentum * m;
      stats.var[static_cast<std::size_t>(ch)] = (1.0 - momentum) * stats.var[static_cast<std::size_t>(ch)] + momentum * var_u;
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mu[static_cast<std::size_t>(ch)] = stats.mean[static_cast<std::size_t>(ch)];
      invstd[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(stats.var[static_cast<std::size_t>(ch)] + eps);
    }
  }

  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::int64_t n = 0; n < b; ++n) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const double m = mu[static_cast<std::size_t>(ch)];
      const double is = invstd[static_cast<std::size_t>(ch)];
      const double g = gv[ch], be = bv[ch];
      const double* p = xv.data() + (n * c + ch) * inner;
      double* ph = xhat.data() + (n * c + ch) * inner;
      double* po = out.data() + (n * c + ch) * inner;
      for (std::int64_t i = 0; i < inner; ++i) {
        ph[i] = (p[i] - m) * is;
        po[i] = g * ph[i] + be;
      }
    }
  }

  return push(Op::batch_norm, std::move(out),
              [x, gamma, beta, xhat = std::move(xhat), invstd = std::move(invstd), training, b, c, inner,
               n_red](Tape& t, const Tensor& dout, std::vector<Tensor>& adj) {
                const Tensor& gv = t.val(gamma.id);
                Tensor dx(t.val(x.id).shape());
                Tensor dg({c});
                Tensor db({c});
                for (std::int64_t ch = 0; ch < c; ++ch) {
                  double sum_dy = 0.0, sum_dy_xhat = 0.0;
                  for (std::int64_t n = 0; n < b; ++n) {
                    const double* dy = dout.data() + (n * c + ch) * inner;
                    const double* xh = xhat.data() + (n * c + ch) * inner;
                    for (std::int64_t i = 0; i < inner; ++i) {
                      sum_dy += dy[i];
                      sum_dy_xhat += dy[i] * xh[i];
                    }
                  }
                  dg[ch] = sum_dy_xhat;
                  db[ch] = sum_dy;
                  const double g_is = gv[ch] * invstd[static_cast<std::size_t>(ch)];
                  if (training) {
                    const double inv_n = 1.0 / static_cast<double>(n_red);
                    for (std::int64_t n = 0; n < b; ++n) {
                      const double* dy = dout.data() + (n * c + ch) * inner;
                      const double* xh = xhat.data() + (n * c + ch) * inner;
                      double* dxp = dx.data() + (n * c + ch) * inner;
                      for (std::int64_t i = 0; i < inner; ++i) {
                        dxp[i] = g_is * (dy[i] - inv_n * sum_dy - xh[i] * inv_n * sum_dy_xhat);
                      }
                    }
                  } else {
                    for (std::int64_t n = 0; n < b; ++n) {
                      const double* dy = dout.data() + (n * c + ch) * inner;
                      double* dxp = dx.data() + (n * c + ch) * inner;
                      for (std::int64_t i = 0; i < inner; ++i) dxp[i] = g_is * dy[i];
                    }
                  }
                }
                accumulate(adj, x.id, dx);
                accumulate(adj, gamma.id, dg);
                accumulate(adj, beta.id, db);
              });
}

Var Tape::laplacian5(Var f, double h, Boundary bc) {
  Tensor out = ops::laplacian5(val(f.id), h, bc);
  return push(Op::laplacian5, std::move(out), [f, h, bc](Tape&, const Tensor& dout, std::vector<Tensor>& adj) {
    accumulate(adj, f.id, ops::laplacian5_adjoint(dout, h, bc));
  });
}

Grad Tape::backward(Var loss) {
  if (consumed_) throw std::runtime_error("tape: backward on an already-consumed tape");
  if (!loss.valid() || static_cast<std::size_t>(loss.id) >= nodes_.size()) {
    throw std::invalid_argument("tape: invalid loss var");
  }
  if (nodes_[static_cast<std::size_t>(loss.id)].value.numel() != 1) {
    throw std::invalid_argument("tape: backward requires a scalar loss, got shape " +
                                shape_str(nodes_[static_cast<std::size_t>(loss.id)].value.shape()));
  }
  consumed_ = true;

  std::vector<Tensor> adj(nodes_.size());
  adj[static_cast<std::size_t>(loss.id)] =
      Tensor::full(nodes_[static_cast<std::size_t>(loss.id)].value.shape(), 1.0);
  for (std::int32_t i = loss.id; i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (adj[static_cast<std::size_t>(i)].numel() == 0 || !node.vjp) continue;
    node.vjp(*this, adj[static_cast<std::size_t>(i)], adj);
  }

  Grad g;
  for (const auto& [name, id] : leaves_) {
    Tensor& a = adj[static_cast<std::size_t>(id)];
    if (a.numel() == 0) a = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape());
    g.by_id_.emplace(id, std::move(a));
    if (!name.empty()) g.names_.emplace(name, id);
  }
  return g;
}

void Tape::reset() {
  nodes_.clear();
  leaves_.clear();
  consumed_ = false;
}

double grad_check(const std::function<Var(Tape&, std::span<const Var>)>& f, std::span<const Tensor> leaves,
                  double step, std::int64_t max_coords_per_leaf, std::uint64_t coord_seed) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  std::vector<Tensor> w(leaves.begin(), leaves.end());

  auto eval = [&](Grad* grad_out) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) vars.push_back(t.leaf(w[i], "leaf" + std::to_string(i)));
    Var loss = f(t, vars);
    const double v = t.value(loss).item();
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: function returned non-finite value");
    if (grad_out) *grad_out = t.backward(loss);
    return v;
  };

  Grad analytic;
  eval(&analytic);

  std::mt19937_64 rng(coord_seed);
  double max_rel = 0.0;
  for (std::size_t li = 0; li < w.size(); ++li) {
    const Tensor& ag = analytic.at("leaf" + std::to_string(li));
    std::vector<std::int64_t> coords(static_cast<std::size_t>(w[li].numel()));
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<std::int64_t>(i);
    if (max_coords_per_leaf > 0 && max_coords_per_leaf < w[li].numel()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(max_coords_per_leaf));
    }
    for (std::int64_t c : coords) {
      const double orig = w[li][c];
      w[li][c] = orig + step;
      const double fp = eval(nullptr);
      w[li][c] = orig - step;
      const double fm = eval(nullptr);
      w[li][c] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double rel = std::abs(ag[c] - numeric) / std::max(1.0, std::abs(ag[c]));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace hsam
