#include "dcl/tensor.hpp"

#include <cmath>
#include <stdexcept>

#include "dcl/rng.hpp"

namespace dcl {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), real(0)) {}

Tensor Tensor::scalar(real v) {
  Tensor t{std::vector<std::size_t>{}};
  t.data_[0] = v;
  return t;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  return Tensor(std::move(shape));
}

Tensor Tensor::full(std::vector<std::size_t> shape, real v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::identity(std::size_t d) {
  Tensor t({d, d});
  for (std::size_t i = 0; i < d; ++i) t.at(i, i) = 1;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<real>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Tensor t({r, c});
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("from_rows: ragged rows");
    std::size_t j = 0;
    for (real v : row) t.at(i, j++) = v;
    ++i;
  }
  return t;
}

Tensor Tensor::from_vector(std::vector<real> values) {
  Tensor t;
  t.shape_ = {values.size()};
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::normal(std::vector<std::size_t> shape, Rng& rng, real mean,
                      real stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = static_cast<real>(rng.normal(mean, stddev));
  return t;
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, Rng& rng, real lo,
                       real hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = static_cast<real>(rng.uniform(lo, hi));
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows(): tensor is not rank-2");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols(): tensor is not rank-2");
  return shape_[1];
}

real& Tensor::at(std::size_t i, std::size_t j) {
  return data_[i * shape_[1] + j];
}

real Tensor::at(std::size_t i, std::size_t j) const {
  return data_[i * shape_[1] + j];
}

std::span<real> Tensor::row(std::size_t i) {
  std::size_t c = cols();
  return {data_.data() + i * c, c};
}

std::span<const real> Tensor::row(std::size_t i) const {
  std::size_t c = cols();
  return {data_.data() + i * c, c};
}

void Tensor::fill(real v) {
  for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (real v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(const char* context) const {
  if (!all_finite()) {
    throw std::runtime_error(std::string("non-finite values in ") + context);
  }
}

Tensor Tensor::transposed() const {
  std::size_t r = rows(), c = cols();
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t.at(j, i) = at(i, j);
  return t;
}

real frobenius_distance(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("frobenius_distance: shape mismatch");
  real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    real d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

real frobenius_norm(const Tensor& a) {
  real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

}  // namespace dcl
