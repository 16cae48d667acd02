#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>

#include "dcl/dataset.hpp"
#include "dcl/model.hpp"
#include "dcl/systems.hpp"

namespace dcl {

// ---- affine alignment ----------------------------------------------------------

// Affine maps between true and recovered latent spaces, each fitted by its own
// least-squares regression with intercept:
//   recovered ~ L true + b      and      true ~ L' recovered + b'.
struct AlignmentResult {
  Tensor L, b;
  Tensor L_prime, b_prime;
  real residual_fwd = 0;
  real residual_rev = 0;
  bool rank_deficient = false;
};

AlignmentResult fit_alignment(const Tensor& x_true, const Tensor& x_rec);

// Variance-weighted multi-output R^2 of `pred` against `target`.
real r2_score(const Tensor& target, const Tensor& pred);

// R^2 between the true latents and the aligned recovered latents L' xhat + b'.
// Throws when the true latents have zero variance.
real r2_latent(const Tensor& x_true, const Tensor& x_rec,
               const AlignmentResult& align);

// || A - L' Ahat L ||_F, the conjugation residual of the recovered dynamics
// matrix (L' serves as the numerically estimated inverse of L).
real lds_error(const Tensor& a_true, const Tensor& a_hat,
               const AlignmentResult& align);

// ---- dynamics R^2 -----------------------------------------------------------------

struct DynR2Options {
  int n_steps = 1;
  // Control variant: replace the model dynamics with the identity.
  bool identity_dynamics = false;
};

// r2_score( fhat^n(xhat), L f^n(L' xhat + b') + b ) over all valid time steps
// (those with n in-trial successors). The true map f uses the dataset's mode
// and control sequences; the model map uses hard-inferred modes on xhat.
real dyn_r2(const GeneratedSystem& system, const TrajectoryDataset& ds,
            DynamicsModel& model, const Tensor& xhat,
            const AlignmentResult& align, const DynR2Options& opt);

// ---- assignments -------------------------------------------------------------------

// Maximum-total-score assignment on a square score matrix (Hungarian
// algorithm); returns column index per row.
std::vector<int> hungarian_max(const Tensor& score);

// Fraction of matching labels under the best label permutation. Throws for
// K > 64.
real cluster_accuracy(std::span<const int> true_modes,
                      std::span<const int> predicted_modes, int num_modes);

// Mean absolute Pearson correlation of optimally assigned latent components.
// Zero-variance columns correlate as 0.
real mcc(const Tensor& x_true, const Tensor& x_rec);

// ---- report -----------------------------------------------------------------------

struct MetricsReport {
  std::optional<real> r2_latent;
  std::optional<real> lds_error;
  std::optional<real> dyn_r2;            // n = 1
  std::optional<real> cluster_accuracy;
  std::optional<real> mcc;
  // Named variants, e.g. "dyn_r2_n10", "dyn_r2_identity_n10".
  std::map<std::string, real> variants;
};

}  // namespace dcl
