#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "dcl/common.hpp"

namespace dcl {

class Rng;

// Dense row-major tensor of reals. Rank 0 (scalar), 1 (vector) and 2 (matrix)
// cover everything this library needs; no broadcasting machinery beyond that.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);

  static Tensor scalar(real v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, real v);
  static Tensor identity(std::size_t d);
  static Tensor from_rows(std::initializer_list<std::initializer_list<real>> rows);
  static Tensor from_vector(std::vector<real> values);
  static Tensor normal(std::vector<std::size_t> shape, Rng& rng, real mean = 0,
                       real stddev = 1);
  static Tensor uniform(std::vector<std::size_t> shape, Rng& rng, real lo,
                        real hi);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // 2-d accessors (throw unless rank() == 2).
  std::size_t rows() const;
  std::size_t cols() const;
  real& at(std::size_t i, std::size_t j);
  real at(std::size_t i, std::size_t j) const;

  // 1-d / flat accessors.
  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }
  std::span<const real> span() const { return {data_.data(), data_.size()}; }

  std::span<real> row(std::size_t i);
  std::span<const real> row(std::size_t i) const;

  void fill(real v);
  bool all_finite() const;
  // Throws std::runtime_error naming `context` if any entry is NaN/Inf.
  void require_finite(const char* context) const;

  Tensor transposed() const;  // rank-2 only

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<real> data_;
};

// Frobenius / L2 distance between same-shape tensors.
real frobenius_distance(const Tensor& a, const Tensor& b);
real frobenius_norm(const Tensor& a);

}  // namespace dcl
