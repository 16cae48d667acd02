#pragma once

#include <optional>
#include <vector>

#include "dcl/dataset.hpp"
#include "dcl/rng.hpp"
#include "dcl/tensor.hpp"

namespace dcl {

// Observation models g. The MLP variant keeps every square layer
// well-conditioned (resampling against a condition-number bound) and lifts to
// D dimensions through a matrix with orthonormal columns, so g stays injective.

struct MixingMlp {
  std::vector<Tensor> weights;  // L square d x d layers
  std::vector<Tensor> biases;   // L vectors, zero-initialized
  Tensor lift;                  // D x d, orthonormal columns
  real activation_slope = 0.2;  // negative-side slope of the leaky activation
  real cond_threshold = 6.0;

  std::size_t latent_dim() const { return lift.cols(); }
  std::size_t observed_dim() const { return lift.rows(); }
};

// Square layers are resampled (entries N(0, 1/sqrt(d))) until their condition
// number is below `cond_threshold`; more than 1000 consecutive rejections for
// one layer is an error. Deterministic in `rng`.
MixingMlp build_mixing_mlp(std::size_t d, std::size_t D, std::size_t layers,
                           Rng& rng, real cond_threshold = 6.0);

// Row-wise application of the mixing network: activation between square
// layers, then the linear lift.
Tensor apply_mixing(const MixingMlp& g, const Tensor& x);

// Rank-restricted mixing: y = lift . inner(project . x) with
// project in R^{r x n}, lift in R^{m x r}, and an optional injective
// nonlinear map on the r-dimensional intermediate space.
struct LowRankMixing {
  Tensor project;  // r x n
  Tensor lift;     // m x r
  std::optional<MixingMlp> inner;  // acts on r dims when present
  std::size_t rank() const { return project.rows(); }
};

LowRankMixing build_low_rank_mixing(std::size_t n, std::size_t m,
                                    std::size_t rank, std::size_t inner_layers,
                                    Rng& rng, real cond_threshold = 6.0);

Tensor apply_mixing(const LowRankMixing& g, const Tensor& x);

// ---- time-lag embedding ------------------------------------------------------

// Lag offsets are strictly decreasing from tau down to 0; the stacked row at
// output index i is [y_{i + tau - lag_0}, ..., y_{i + tau - lag_{k-1}}], i.e.
// [y_i, ..., y_{i+tau}], which corresponds to the latent x_i.
struct TimeLagConfig {
  std::size_t tau = 0;
  std::vector<std::size_t> lag_indices;  // first = tau, last = 0

  std::size_t k() const { return lag_indices.size(); }
  void validate() const;
};

// k points equidistantly spaced over [tau, 0] (rounded). k = 1 requires
// tau = 0 (the identity embedding).
TimeLagConfig make_equidistant_lags(std::size_t k, std::size_t tau);

// Stacks a single contiguous series: T x m -> (T - tau) x (k m). Throws if
// T <= tau.
Tensor time_lag_embed(const Tensor& y, const TimeLagConfig& cfg);

// Applies the embedding per trial and truncates latents/modes/control to the
// aligned prefix of each trial.
TrajectoryDataset time_lag_embed_dataset(const TrajectoryDataset& ds,
                                         const TimeLagConfig& cfg);

}  // namespace dcl
