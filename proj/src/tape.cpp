#include "dcl/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace dcl {

namespace {

using EMat =
    Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap emap(const Tensor& t) {
  return ECMap(t.data(), static_cast<Eigen::Index>(t.rows()),
               static_cast<Eigen::Index>(t.cols()));
}

EMap emap_mut(Tensor& t) {
  return EMap(t.data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

void check(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

constexpr real kInvSqrt2 = real(0.7071067811865475244L);
constexpr real kInvSqrt2Pi = real(0.3989422804014326779L);

}  // namespace

real gelu_scalar(real x) {
  return x * real(0.5) * (real(1) + std::erf(x * kInvSqrt2));
}

real gelu_grad_scalar(real x) {
  real cdf = real(0.5) * (real(1) + std::erf(x * kInvSqrt2));
  real pdf = kInvSqrt2Pi * std::exp(real(-0.5) * x * x);
  return cdf + x * pdf;
}

// ---- Tape core -------------------------------------------------------------

Var Tape::leaf(Tensor value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  // One leaf per parameter per tape: repeated bindings return the same node
  // so gradients accumulate in one place.
  for (const auto& [idx, bound] : bindings_) {
    if (bound == &p) return {this, idx};
  }
  Var v = leaf(p.value, true);
  bindings_.emplace_back(v.idx, &p);
  return v;
}

Tensor& Tape::grad(int idx) {
  Node& n = nodes_[idx];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(int idx, const Tensor& g) {
  Tensor& dst = grad(idx);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

real* Tape::grad_buffer(int idx) { return grad(idx).data(); }

Var Tape::emit(Tensor value, std::initializer_list<Var> parents,
               std::function<void(Tape&, int)> backward_fn) {
  Node n;
  n.value = std::move(value);
  for (Var p : parents) {
    check(p.tape == this, "op: mixing nodes from different tapes");
    n.parents[n.num_parents++] = p.idx;
    n.needs_grad = n.needs_grad || nodes_[p.idx].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  check(loss.tape == this, "backward: foreign node");
  Node& top = nodes_[loss.idx];
  if (top.value.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  grad(loss.idx)[0] = 1;
  backward_visits_ = 0;
  // Construction order is topological, so one reverse sweep suffices and every
  // node is visited exactly once.
  for (int i = loss.idx; i >= 0; --i) {
    ++backward_visits_;
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

Tensor Tape::grad_of(const Parameter& p) const {
  for (const auto& [idx, bound] : bindings_) {
    if (bound == &p) {
      const Node& n = nodes_[idx];
      if (n.has_grad) return n.grad;
      return Tensor::zeros(p.value.shape());
    }
  }
  throw std::invalid_argument("grad_of: parameter not bound to this tape");
}

// ---- ops -------------------------------------------------------------------

namespace ops {

namespace {
const Tensor& pval(Tape& t, int self, int k) {
  return t.value(t.node(self).parents[k]);
}
int pidx(Tape& t, int self, int k) { return t.node(self).parents[k]; }
}  // namespace

Var add(Var a, Var b) {
  const Tensor& ta = a.tape->value(a);
  const Tensor& tb = b.tape->value(b);
  check(ta.same_shape(tb), "add: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  return a.tape->emit(std::move(out), {a, b}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    t.accumulate(pidx(t, self, 0), g);
    t.accumulate(pidx(t, self, 1), g);
  });
}

Var sub(Var a, Var b) {
  const Tensor& ta = a.tape->value(a);
  const Tensor& tb = b.tape->value(b);
  check(ta.same_shape(tb), "sub: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
  return a.tape->emit(std::move(out), {a, b}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    t.accumulate(pidx(t, self, 0), g);
    Tensor& gb = t.grad(pidx(t, self, 1));
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  const Tensor& ta = a.tape->value(a);
  const Tensor& tb = b.tape->value(b);
  check(ta.same_shape(tb), "mul: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  return a.tape->emit(std::move(out), {a, b}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = pval(t, self, 0);
    const Tensor& vb = pval(t, self, 1);
    Tensor& ga = t.grad(pidx(t, self, 0));
    Tensor& gb = t.grad(pidx(t, self, 1));
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  });
}

Var scale(Var a, real c) {
  Tensor out = a.tape->value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return a.tape->emit(std::move(out), {a}, [c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(pidx(t, self, 0));
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var add_scalar(Var a, real c) {
  Tensor out = a.tape->value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
  return a.tape->emit(std::move(out), {a}, [](Tape& t, int self) {
    t.accumulate(pidx(t, self, 0), t.grad(self));
  });
}

Var matmul(Var a, Var b) {
  const Tensor& ta = a.tape->value(a);
  const Tensor& tb = b.tape->value(b);
  check(ta.rank() == 2 && tb.rank() == 2 && ta.cols() == tb.rows(),
        "matmul: shape mismatch");
  Tensor out({ta.rows(), tb.cols()});
  emap_mut(out).noalias() = emap(ta) * emap(tb);
  return a.tape->emit(std::move(out), {a, b}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = pval(t, self, 0);
    const Tensor& vb = pval(t, self, 1);
    emap_mut(t.grad(pidx(t, self, 0))).noalias() += emap(g) * emap(vb).transpose();
    emap_mut(t.grad(pidx(t, self, 1))).noalias() += emap(va).transpose() * emap(g);
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& ta = a.tape->value(a);
  const Tensor& tb = b.tape->value(b);
  check(ta.rank() == 2 && tb.rank() == 2 && ta.cols() == tb.cols(),
        "matmul_nt: shape mismatch");
  Tensor out({ta.rows(), tb.rows()});
  emap_mut(out).noalias() = emap(ta) * emap(tb).transpose();
  return a.tape->emit(std::move(out), {a, b}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = pval(t, self, 0);
    const Tensor& vb = pval(t, self, 1);
    emap_mut(t.grad(pidx(t, self, 0))).noalias() += emap(g) * emap(vb);
    emap_mut(t.grad(pidx(t, self, 1))).noalias() += emap(g).transpose() * emap(va);
  });
}

Var add_rowvec(Var a, Var v) {
  const Tensor& ta = a.tape->value(a);
  const Tensor& tv = v.tape->value(v);
  check(ta.rank() == 2 && tv.rank() == 1 && tv.size() == ta.cols(),
        "add_rowvec: shape mismatch");
  Tensor out = ta;
  for (std::size_t i = 0; i < ta.rows(); ++i)
    for (std::size_t j = 0; j < ta.cols(); ++j) out.at(i, j) += tv[j];
  return a.tape->emit(std::move(out), {a, v}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    t.accumulate(pidx(t, self, 0), g);
    Tensor& gv = t.grad(pidx(t, self, 1));
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gv[j] += g.at(i, j);
  });
}

Var gelu(Var a) {
  Tensor out = a.tape->value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_scalar(out[i]);
  return a.tape->emit(std::move(out), {a}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = pval(t, self, 0);
    Tensor& gx = t.grad(pidx(t, self, 0));
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[i] += g[i] * gelu_grad_scalar(x[i]);
  });
}

Var row_normalize(Var a) {
  const Tensor& ta = a.tape->value(a);
  check(ta.rank() == 2, "row_normalize: expects a matrix");
  Tensor out = ta;
  for (std::size_t i = 0; i < ta.rows(); ++i) {
    real r = 0;
    for (std::size_t j = 0; j < ta.cols(); ++j) r += ta.at(i, j) * ta.at(i, j);
    r = std::sqrt(std::max(r, real(1e-24)));
    for (std::size_t j = 0; j < ta.cols(); ++j) out.at(i, j) /= r;
  }
  return a.tape->emit(std::move(out), {a}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = pval(t, self, 0);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(pidx(t, self, 0));
    for (std::size_t i = 0; i < x.rows(); ++i) {
      real r = 0, dot = 0;
      for (std::size_t j = 0; j < x.cols(); ++j) {
        r += x.at(i, j) * x.at(i, j);
        dot += y.at(i, j) * g.at(i, j);
      }
      r = std::sqrt(std::max(r, real(1e-24)));
      for (std::size_t j = 0; j < x.cols(); ++j)
        gx.at(i, j) += (g.at(i, j) - y.at(i, j) * dot) / r;
    }
  });
}

Var sum_all(Var a) {
  const Tensor& ta = a.tape->value(a);
  real s = 0;
  for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
  return a.tape->emit(Tensor::scalar(s), {a}, [](Tape& t, int self) {
    real g = t.grad(self)[0];
    Tensor& ga = t.grad(pidx(t, self, 0));
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean_all(Var a) {
  const Tensor& ta = a.tape->value(a);
  check(ta.size() > 0, "mean_all: empty tensor");
  real s = 0;
  for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
  real inv = real(1) / static_cast<real>(ta.size());
  return a.tape->emit(Tensor::scalar(s * inv), {a}, [inv](Tape& t, int self) {
    real g = t.grad(self)[0] * inv;
    Tensor& ga = t.grad(pidx(t, self, 0));
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var slice_cols(Var a, std::size_t j0, std::size_t j1) {
  const Tensor& ta = a.tape->value(a);
  check(ta.rank() == 2 && j0 < j1 && j1 <= ta.cols(), "slice_cols: bad range");
  Tensor out({ta.rows(), j1 - j0});
  for (std::size_t i = 0; i < ta.rows(); ++i)
    for (std::size_t j = j0; j < j1; ++j) out.at(i, j - j0) = ta.at(i, j);
  return a.tape->emit(std::move(out), {a}, [j0](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(pidx(t, self, 0));
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga.at(i, j0 + j) += g.at(i, j);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  check(!parts.empty() && parts.size() <= 3,
        "concat_cols: supports 1..3 parts");
  Tape* tape = parts[0].tape;
  std::size_t rows = tape->value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    check(tape->value(p).rank() == 2 && tape->value(p).rows() == rows,
          "concat_cols: row mismatch");
    cols += tape->value(p).cols();
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& tp = tape->value(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < tp.cols(); ++j)
        out.at(i, off + j) = tp.at(i, j);
    off += tp.cols();
  }
  auto backward = [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (int k = 0; k < t.node(self).num_parents; ++k) {
      Tensor& gp = t.grad(pidx(t, self, k));
      for (std::size_t i = 0; i < gp.rows(); ++i)
        for (std::size_t j = 0; j < gp.cols(); ++j)
          gp.at(i, j) += g.at(i, off + j);
      off += gp.cols();
    }
  };
  if (parts.size() == 1) return tape->emit(std::move(out), {parts[0]}, backward);
  if (parts.size() == 2)
    return tape->emit(std::move(out), {parts[0], parts[1]}, backward);
  return tape->emit(std::move(out), {parts[0], parts[1], parts[2]}, backward);
}

Var sqdist_rows(Var a, Var b) {
  const Tensor& ta = a.tape->value(a);
  const Tensor& tb = b.tape->value(b);
  check(ta.rank() == 2 && ta.same_shape(tb), "sqdist_rows: shape mismatch");
  Tensor out({ta.rows()});
  for (std::size_t i = 0; i < ta.rows(); ++i) {
    real s = 0;
    for (std::size_t j = 0; j < ta.cols(); ++j) {
      real d = ta.at(i, j) - tb.at(i, j);
      s += d * d;
    }
    out[i] = s;
  }
  return a.tape->emit(std::move(out), {a, b}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = pval(t, self, 0);
    const Tensor& vb = pval(t, self, 1);
    Tensor& ga = t.grad(pidx(t, self, 0));
    Tensor& gb = t.grad(pidx(t, self, 1));
    for (std::size_t i = 0; i < va.rows(); ++i) {
      real gi = 2 * g[i];
      for (std::size_t j = 0; j < va.cols(); ++j) {
        real d = gi * (va.at(i, j) - vb.at(i, j));
        ga.at(i, j) += d;
        gb.at(i, j) -= d;
      }
    }
  });
}

Var dot_rows(Var a, Var b) {
  const Tensor& ta = a.tape->value(a);
  const Tensor& tb = b.tape->value(b);
  check(ta.rank() == 2 && ta.same_shape(tb), "dot_rows: shape mismatch");
  Tensor out({ta.rows()});
  for (std::size_t i = 0; i < ta.rows(); ++i) {
    real s = 0;
    for (std::size_t j = 0; j < ta.cols(); ++j) s += ta.at(i, j) * tb.at(i, j);
    out[i] = s;
  }
  return a.tape->emit(std::move(out), {a, b}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = pval(t, self, 0);
    const Tensor& vb = pval(t, self, 1);
    Tensor& ga = t.grad(pidx(t, self, 0));
    Tensor& gb = t.grad(pidx(t, self, 1));
    for (std::size_t i = 0; i < va.rows(); ++i)
      for (std::size_t j = 0; j < va.cols(); ++j) {
        ga.at(i, j) += g[i] * vb.at(i, j);
        gb.at(i, j) += g[i] * va.at(i, j);
      }
  });
}

Var sqdist_matrix(Var a, Var b) {
  const Tensor& ta = a.tape->value(a);
  const Tensor& tb = b.tape->value(b);
  check(ta.rank() == 2 && tb.rank() == 2 && ta.cols() == tb.cols(),
        "sqdist_matrix: shape mismatch");
  const std::size_t n = ta.rows(), m = tb.rows(), d = ta.cols();
  Tensor out({n, m});
  // ||a||^2 + ||b||^2 - 2 a.b via one GEMM.
  std::vector<real> a2(n, 0), b2(m, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) a2[i] += ta.at(i, j) * ta.at(i, j);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) b2[i] += tb.at(i, j) * tb.at(i, j);
  emap_mut(out).noalias() = emap(ta) * emap(tb).transpose();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out.at(i, j) = a2[i] + b2[j] - 2 * out.at(i, j);
  return a.tape->emit(std::move(out), {a, b}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& va = pval(t, self, 0);
    const Tensor& vb = pval(t, self, 1);
    Tensor& ga = t.grad(pidx(t, self, 0));
    Tensor& gb = t.grad(pidx(t, self, 1));
    const std::size_t n = va.rows(), m = vb.rows(), d = va.cols();
    std::vector<real> rowsum(n, 0), colsum(m, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        rowsum[i] += g.at(i, j);
        colsum[j] += g.at(i, j);
      }
    // dA = 2 (diag(rowsum) A - g B); dB = 2 (diag(colsum) B - g^T A)
    emap_mut(ga).noalias() -= real(2) * (emap(g) * emap(vb));
    emap_mut(gb).noalias() -= real(2) * (emap(g).transpose() * emap(va));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        ga.at(i, j) += 2 * rowsum[i] * va.at(i, j);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d; ++j)
        gb.at(i, j) += 2 * colsum[i] * vb.at(i, j);
  });
}

Var dot_matrix(Var a, Var b) { return matmul_nt(a, b); }

Var recip_guard(Var a, real delta) {
  check(delta > 0, "recip_guard: delta must be positive");
  Tensor out = a.tape->value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = real(1) / (out[i] + delta);
  return a.tape->emit(std::move(out), {a}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(pidx(t, self, 0));
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i] * y[i] * y[i];
  });
}

Var softmax_rows(Var a) {
  const Tensor& ta = a.tape->value(a);
  check(ta.rank() == 2 && ta.cols() > 0, "softmax_rows: expects a matrix");
  Tensor out = ta;
  for (std::size_t i = 0; i < ta.rows(); ++i) {
    real mx = ta.at(i, 0);
    for (std::size_t j = 1; j < ta.cols(); ++j) mx = std::max(mx, ta.at(i, j));
    real z = 0;
    for (std::size_t j = 0; j < ta.cols(); ++j) {
      out.at(i, j) = std::exp(ta.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (std::size_t j = 0; j < ta.cols(); ++j) out.at(i, j) /= z;
  }
  return a.tape->emit(std::move(out), {a}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(pidx(t, self, 0));
    for (std::size_t i = 0; i < y.rows(); ++i) {
      real dot = 0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j)
        ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

Var bank_sqdist(Var y, Var target, std::size_t num_modes) {
  const Tensor& ty = y.tape->value(y);
  const Tensor& tt = target.tape->value(target);
  check(ty.rank() == 2 && tt.rank() == 2 && ty.rows() == tt.rows(),
        "bank_sqdist: shape mismatch");
  const std::size_t d = tt.cols();
  check(ty.cols() == num_modes * d, "bank_sqdist: bank width mismatch");
  Tensor out({ty.rows(), num_modes});
  for (std::size_t b = 0; b < ty.rows(); ++b)
    for (std::size_t k = 0; k < num_modes; ++k) {
      real s = 0;
      for (std::size_t j = 0; j < d; ++j) {
        real diff = ty.at(b, k * d + j) - tt.at(b, j);
        s += diff * diff;
      }
      out.at(b, k) = s;
    }
  return y.tape->emit(std::move(out), {y, target}, [num_modes](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& vy = pval(t, self, 0);
    const Tensor& vt = pval(t, self, 1);
    Tensor& gy = t.grad(pidx(t, self, 0));
    Tensor& gt = t.grad(pidx(t, self, 1));
    const std::size_t d = vt.cols();
    for (std::size_t b = 0; b < vy.rows(); ++b)
      for (std::size_t k = 0; k < num_modes; ++k) {
        real gk = 2 * g.at(b, k);
        for (std::size_t j = 0; j < d; ++j) {
          real diff = gk * (vy.at(b, k * d + j) - vt.at(b, j));
          gy.at(b, k * d + j) += diff;
          gt.at(b, j) -= diff;
        }
      }
  });
}

Var bank_mix(Var y, Var weights) {
  const Tensor& ty = y.tape->value(y);
  const Tensor& tw = weights.tape->value(weights);
  check(ty.rank() == 2 && tw.rank() == 2 && ty.rows() == tw.rows(),
        "bank_mix: shape mismatch");
  const std::size_t k = tw.cols();
  check(k > 0 && ty.cols() % k == 0, "bank_mix: bank width mismatch");
  const std::size_t d = ty.cols() / k;
  Tensor out({ty.rows(), d});
  for (std::size_t b = 0; b < ty.rows(); ++b)
    for (std::size_t kk = 0; kk < k; ++kk) {
      real w = tw.at(b, kk);
      for (std::size_t j = 0; j < d; ++j) out.at(b, j) += w * ty.at(b, kk * d + j);
    }
  return y.tape->emit(std::move(out), {y, weights}, [k, d](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& vy = pval(t, self, 0);
    const Tensor& vw = pval(t, self, 1);
    Tensor& gy = t.grad(pidx(t, self, 0));
    Tensor& gw = t.grad(pidx(t, self, 1));
    for (std::size_t b = 0; b < vy.rows(); ++b)
      for (std::size_t kk = 0; kk < k; ++kk) {
        real acc = 0;
        real w = vw.at(b, kk);
        for (std::size_t j = 0; j < d; ++j) {
          acc += g.at(b, j) * vy.at(b, kk * d + j);
          gy.at(b, kk * d + j) += w * g.at(b, j);
        }
        gw.at(b, kk) += acc;
      }
  });
}

Var add_bank_bias(Var y, Var bias) {
  const Tensor& ty = y.tape->value(y);
  const Tensor& tb = bias.tape->value(bias);
  check(ty.rank() == 2 && tb.rank() == 2 &&
            ty.cols() == tb.rows() * tb.cols(),
        "add_bank_bias: shape mismatch");
  Tensor out = ty;
  const std::size_t kd = ty.cols();
  for (std::size_t b = 0; b < ty.rows(); ++b)
    for (std::size_t i = 0; i < kd; ++i) out.at(b, i) += tb[i];
  return y.tape->emit(std::move(out), {y, bias}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gy = t.grad(pidx(t, self, 0));
    Tensor& gb = t.grad(pidx(t, self, 1));
    for (std::size_t b = 0; b < g.rows(); ++b)
      for (std::size_t i = 0; i < g.cols(); ++i) {
        gy.at(b, i) += g.at(b, i);
        gb[i] += g.at(b, i);
      }
  });
}

Var logsumexp_rows_with(Var scores, Var extra) {
  const Tensor& ts = scores.tape->value(scores);
  const Tensor& te = extra.tape->value(extra);
  check(ts.rank() == 2 && te.rank() == 1 && ts.rows() == te.size(),
        "logsumexp_rows_with: shape mismatch");
  const std::size_t n = ts.rows(), m = ts.cols();
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    real mx = te[i];
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, ts.at(i, j));
    real z = std::exp(te[i] - mx);
    for (std::size_t j = 0; j < m; ++j) z += std::exp(ts.at(i, j) - mx);
    out[i] = mx + std::log(z);
  }
  return scores.tape->emit(std::move(out), {scores, extra}, [](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& vs = pval(t, self, 0);
    const Tensor& ve = pval(t, self, 1);
    const Tensor& lse = t.value(self);
    Tensor& gs = t.grad(pidx(t, self, 0));
    Tensor& ge = t.grad(pidx(t, self, 1));
    for (std::size_t i = 0; i < vs.rows(); ++i) {
      ge[i] += g[i] * std::exp(ve[i] - lse[i]);
      for (std::size_t j = 0; j < vs.cols(); ++j)
        gs.at(i, j) += g[i] * std::exp(vs.at(i, j) - lse[i]);
    }
  });
}

Var kde_log_gauss(Var query, const Tensor& anchors, real epsilon) {
  check(epsilon > 0, "kde_log_gauss: epsilon must be positive");
  const Tensor& tq = query.tape->value(query);
  check(tq.rank() == 2 && anchors.rank() == 2 && tq.cols() == anchors.cols(),
        "kde_log_gauss: shape mismatch");
  check(anchors.rows() > 0, "kde_log_gauss: empty anchor set");
  const std::size_t n = tq.rows(), m = anchors.rows(), d = tq.cols();
  const real log_norm = std::log(epsilon * static_cast<real>(m));
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    real mx = -std::numeric_limits<real>::infinity();
    for (std::size_t a = 0; a < m; ++a) {
      real s = 0;
      for (std::size_t j = 0; j < d; ++j) {
        real diff = tq.at(i, j) - anchors.at(a, j);
        s += diff * diff;
      }
      mx = std::max(mx, -s / epsilon);
    }
    real z = 0;
    for (std::size_t a = 0; a < m; ++a) {
      real s = 0;
      for (std::size_t j = 0; j < d; ++j) {
        real diff = tq.at(i, j) - anchors.at(a, j);
        s += diff * diff;
      }
      z += std::exp(-s / epsilon - mx);
    }
    // Floor keeps a query far from every anchor finite.
    out[i] = std::max(mx + std::log(z) - log_norm, real(-745));
  }
  Tensor anchors_copy = anchors;
  return query.tape->emit(
      std::move(out), {query},
      [anchors_copy, epsilon, log_norm](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& tq = pval(t, self, 0);
        const Tensor& lq = t.value(self);
        Tensor& gq = t.grad(pidx(t, self, 0));
        const std::size_t m = anchors_copy.rows(), d = tq.cols();
        for (std::size_t i = 0; i < tq.rows(); ++i) {
          if (lq[i] <= real(-745)) continue;  // floored: zero gradient
          for (std::size_t a = 0; a < m; ++a) {
            real s = 0;
            for (std::size_t j = 0; j < d; ++j) {
              real diff = tq.at(i, j) - anchors_copy.at(a, j);
              s += diff * diff;
            }
            // weight = exp(-s/eps - log_norm) / qhat = exp(-s/eps - log_norm - lq)
            real w = std::exp(-s / epsilon - log_norm - lq[i]);
            real c = g[i] * w * (-2 / epsilon);
            for (std::size_t j = 0; j < d; ++j)
              gq.at(i, j) += c * (tq.at(i, j) - anchors_copy.at(a, j));
          }
        }
      });
}

Var kde_log_vmf(Var query, const Tensor& anchors, real kappa) {
  check(kappa > 0, "kde_log_vmf: kappa must be positive");
  const Tensor& tq = query.tape->value(query);
  check(tq.rank() == 2 && anchors.rank() == 2 && tq.cols() == anchors.cols(),
        "kde_log_vmf: shape mismatch");
  check(anchors.rows() > 0, "kde_log_vmf: empty anchor set");
  const std::size_t n = tq.rows(), m = anchors.rows(), d = tq.cols();
  const real log_m = std::log(static_cast<real>(m));
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    real mx = -std::numeric_limits<real>::infinity();
    for (std::size_t a = 0; a < m; ++a) {
      real s = 0;
      for (std::size_t j = 0; j < d; ++j) s += tq.at(i, j) * anchors.at(a, j);
      mx = std::max(mx, kappa * s);
    }
    real z = 0;
    for (std::size_t a = 0; a < m; ++a) {
      real s = 0;
      for (std::size_t j = 0; j < d; ++j) s += tq.at(i, j) * anchors.at(a, j);
      z += std::exp(kappa * s - mx);
    }
    out[i] = mx + std::log(z) - log_m;
  }
  Tensor anchors_copy = anchors;
  return query.tape->emit(
      std::move(out), {query}, [anchors_copy, kappa, log_m](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& tq = pval(t, self, 0);
        const Tensor& lq = t.value(self);
        Tensor& gq = t.grad(pidx(t, self, 0));
        const std::size_t m = anchors_copy.rows(), d = tq.cols();
        for (std::size_t i = 0; i < tq.rows(); ++i) {
          for (std::size_t a = 0; a < m; ++a) {
            real s = 0;
            for (std::size_t j = 0; j < d; ++j)
              s += tq.at(i, j) * anchors_copy.at(a, j);
            real w = std::exp(kappa * s - log_m - lq[i]);
            for (std::size_t j = 0; j < d; ++j)
              gq.at(i, j) += g[i] * w * kappa * anchors_copy.at(a, j);
          }
        }
      });
}

}  // namespace ops

}  // namespace dcl
