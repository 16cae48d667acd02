#include "dcl/linalg.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace dcl {

namespace {

using EMat =
    Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap as_eigen(const Tensor& t) {
  return ECMap(t.data(), static_cast<Eigen::Index>(t.rows()),
               static_cast<Eigen::Index>(t.cols()));
}

Tensor from_eigen(const EMat& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  EMap(t.data(), m.rows(), m.cols()) = m;
  return t;
}

}  // namespace

LstsqResult lstsq(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2)
    throw std::invalid_argument("lstsq: inputs must be matrices");
  if (x.rows() != y.rows())
    throw std::invalid_argument("lstsq: row count mismatch");
  if (x.rows() < x.cols())
    throw std::invalid_argument("lstsq: underdetermined system (T < p)");

  ECMap X = as_eigen(x);
  ECMap Y = as_eigen(y);

  Eigen::BDCSVD<EMat> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  // Same default threshold Eigen uses for rank detection.
  const int rank = static_cast<int>(svd.rank());
  EMat coef = svd.solve(Y);

  LstsqResult out;
  out.coef = from_eigen(coef);
  out.rank = rank;
  out.rank_deficient = rank < static_cast<int>(x.cols());
  out.residual = (Y - X * coef).norm();
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  EMat c = as_eigen(a) * as_eigen(b);
  return from_eigen(c);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: shape mismatch");
  EMat c = as_eigen(a) * as_eigen(b).transpose();
  return from_eigen(c);
}

std::vector<real> matvec(const Tensor& a, std::span<const real> x) {
  if (a.cols() != x.size()) throw std::invalid_argument("matvec: shape mismatch");
  std::vector<real> y(a.rows(), 0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    real s = 0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a.at(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

Tensor matrix_inverse(const Tensor& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("inverse: not square");
  Eigen::FullPivLU<EMat> lu(as_eigen(a));
  if (!lu.isInvertible()) throw std::runtime_error("inverse: singular matrix");
  EMat inv = lu.inverse();
  return from_eigen(inv);
}

real determinant(const Tensor& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("determinant: not square");
  return as_eigen(a).determinant();
}

real condition_number(const Tensor& a) {
  Eigen::JacobiSVD<EMat> svd(as_eigen(a));
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  real smallest = sv(sv.size() - 1);
  if (smallest <= 0) return std::numeric_limits<real>::infinity();
  return sv(0) / smallest;
}

int numerical_rank(const Tensor& a, real tol) {
  Eigen::JacobiSVD<EMat> svd(as_eigen(a));
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  if (tol < 0) {
    tol = static_cast<real>(std::max(a.rows(), a.cols())) *
          std::numeric_limits<real>::epsilon() * sv(0);
  }
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++r;
  return r;
}

Tensor orthonormal_columns(const Tensor& a) {
  if (a.rows() < a.cols())
    throw std::invalid_argument("orthonormal_columns: rows < cols");
  Eigen::HouseholderQR<EMat> qr(as_eigen(a));
  EMat q = qr.householderQ() * EMat::Identity(a.rows(), a.cols());
  return from_eigen(q);
}

Tensor matrix_power(const Tensor& a, int n) {
  if (a.rows() != a.cols()) throw std::invalid_argument("matrix_power: not square");
  if (n < 0) throw std::invalid_argument("matrix_power: negative exponent");
  Tensor result = Tensor::identity(a.rows());
  for (int i = 0; i < n; ++i) result = matmul(result, a);
  return result;
}

}  // namespace dcl
