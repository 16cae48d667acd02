#pragma once

#include "dcl/tensor.hpp"

namespace dcl {

// Dense linear-algebra helpers used outside the autodiff tape (simulators,
// metrics, oracles). Backed by Eigen; the Tensor type stays the public
// currency.

struct LstsqResult {
  Tensor coef;          // p x q, minimizes ||Y - X coef||_F
  real residual = 0;    // sqrt of the summed squared residuals
  bool rank_deficient = false;  // minimum-norm fallback was taken
  int rank = 0;
};

// Least squares X (T x p) -> Y (T x q). Throws if T < p. Rank-deficient X
// falls back to the minimum-norm SVD solution and sets the flag.
LstsqResult lstsq(const Tensor& x, const Tensor& y);

Tensor matmul(const Tensor& a, const Tensor& b);
// a . b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// Apply square matrix to a vector: y = A x.
std::vector<real> matvec(const Tensor& a, std::span<const real> x);

Tensor matrix_inverse(const Tensor& a);
real determinant(const Tensor& a);
real condition_number(const Tensor& a);
int numerical_rank(const Tensor& a, real tol = -1);

// Orthonormalize the columns of a (rows >= cols) via QR; returns rows x cols.
Tensor orthonormal_columns(const Tensor& a);

// Matrix power A^n for square A, n >= 0.
Tensor matrix_power(const Tensor& a, int n);

}  // namespace dcl
