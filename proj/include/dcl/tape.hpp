#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dcl/tensor.hpp"

namespace dcl {

// A named trainable tensor. Parameters live outside the tape (a fresh tape is
// built every training step); binding a parameter onto a tape creates a leaf
// node whose gradient can be read back after backward().
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
};

// Reverse-mode autodiff over an operation tape. Nodes are recorded in
// construction order, which is a topological order by construction; backward
// walks the tape once in reverse.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand
    bool has_grad = false;
    bool needs_grad = false;  // reachable from a parameter
    int parents[3] = {-1, -1, -1};
    int num_parents = 0;
    std::function<void(Tape&, int)> backward;
  };

  Var leaf(Tensor value, bool needs_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  // Binds `p` as a trainable leaf; gradient retrievable via grad_of(p).
  Var param(Parameter& p);

  int size() const { return static_cast<int>(nodes_.size()); }
  const Tensor& value(int idx) const { return nodes_[idx].value; }
  const Tensor& value(Var v) const { return nodes_[v.idx].value; }
  Tensor& grad(int idx);
  bool has_grad(int idx) const { return nodes_[idx].has_grad; }

  // Runs reverse-mode accumulation from a scalar loss node. Throws if the
  // loss is not a scalar. Each node is visited exactly once.
  void backward(Var loss);

  // Gradient of the most recent backward() w.r.t. a bound parameter; zeros if
  // the parameter was never reached.
  Tensor grad_of(const Parameter& p) const;

  // Nodes visited by the last backward pass (instrumentation for tests).
  long backward_visits() const { return backward_visits_; }

  // --- internal plumbing used by the op builders ---
  Var emit(Tensor value, std::initializer_list<Var> parents,
           std::function<void(Tape&, int)> backward_fn);
  Node& node(int idx) { return nodes_[idx]; }
  void accumulate(int idx, const Tensor& g);
  // Adds alpha * g into parent gradient without materializing a temporary.
  real* grad_buffer(int idx);

 private:
  std::vector<Node> nodes_;
  std::vector<std::pair<int, const Parameter*>> bindings_;
  long backward_visits_ = 0;
};

// ---- differentiable operations -------------------------------------------

namespace ops {

Var add(Var a, Var b);            // same shape
Var sub(Var a, Var b);            // same shape
Var mul(Var a, Var b);            // elementwise, same shape
Var scale(Var a, real c);
Var add_scalar(Var a, real c);
Var matmul(Var a, Var b);         // [m x k] . [k x n]
Var matmul_nt(Var a, Var b);      // [m x k] . [n x k]^T -> [m x n]
Var add_rowvec(Var a, Var v);     // add length-n vector to each row
Var gelu(Var a);                  // exact erf-based GELU, elementwise
Var row_normalize(Var a);         // rows scaled to unit L2 norm
Var sum_all(Var a);               // -> scalar
Var mean_all(Var a);              // -> scalar
Var slice_cols(Var a, std::size_t j0, std::size_t j1);
Var concat_cols(const std::vector<Var>& parts);

// Per-row squared distance / dot product between same-shape [N x d] inputs.
Var sqdist_rows(Var a, Var b);    // -> [N]
Var dot_rows(Var a, Var b);       // -> [N]

// All-pairs squared distances / dot products: [N x d], [M x d] -> [N x M].
Var sqdist_matrix(Var a, Var b);
Var dot_matrix(Var a, Var b);

Var recip_guard(Var a, real delta);  // 1 / (a + delta), elementwise
Var softmax_rows(Var a);

// Bank operations for switching dynamics. Y = [N x K*d] holds the K candidate
// predictions per row (as produced by matmul_nt with a stacked [K*d x d]
// bank).
Var bank_sqdist(Var y, Var target, std::size_t num_modes);   // -> [N x K]
Var bank_mix(Var y, Var weights);                            // -> [N x d]
Var add_bank_bias(Var y, Var bias);                          // bias [K x d]

// Stable log(exp(extra_b) + sum_m exp(S_bm)) per row; S may have 0 columns.
Var logsumexp_rows_with(Var scores, Var extra);

// Log kernel density estimates against a fixed anchor set (no gradient flows
// into the anchors).
Var kde_log_gauss(Var query, const Tensor& anchors, real epsilon);
Var kde_log_vmf(Var query, const Tensor& anchors, real kappa);

}  // namespace ops

// Exact GELU and its derivative (shared with the non-tape forward path).
real gelu_scalar(real x);
real gelu_grad_scalar(real x);

}  // namespace dcl
