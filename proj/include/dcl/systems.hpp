#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dcl/dataset.hpp"
#include "dcl/rng.hpp"
#include "dcl/tensor.hpp"

namespace dcl {

// Ground-truth latent simulators. Every dynamics matrix produced here is a
// product of Givens rotations, hence orthogonal with unit-magnitude
// eigenvalues; rollouts are noise-stable by construction.

struct NoiseSpec {
  real sigma = 0.0;  // isotropic std; covariance sigma^2 I
};

struct LdsParams {
  Tensor A;                        // d x d
  std::optional<Tensor> B;         // d x c control matrix
  std::vector<real> plane_angles_deg;
};

struct SldsParams {
  std::vector<Tensor> bank;        // K matrices, each d x d
  Tensor transition;               // K x K row-stochastic
  std::vector<double> prior;       // length-K simplex
};

struct LorenzParams {
  real sigma_l = 10.0;
  real rho = 28.0;
  real beta = real(8.0 / 3.0);
  real dt = 0.01;
};

// Product of per-plane Givens rotations over planes (i, j), i < j, in
// lexicographic order. Requires d*(d-1)/2 angles (degrees).
Tensor rotation_matrix(std::size_t d, std::span<const real> angles_deg);

// Angle vectors for rotation_matrix: fixed magnitude with a random sign per
// plane, or uniform draws in [lo, hi].
std::vector<real> signed_plane_angles(std::size_t d, real magnitude_deg, Rng& rng);
std::vector<real> uniform_plane_angles(std::size_t d, real lo_deg, real hi_deg,
                                       Rng& rng);

LdsParams make_rotation_lds(std::size_t d, real magnitude_deg, Rng& rng,
                            bool uniform_angles = false);
// K rotation modes, symmetric transition matrix with the given off-diagonal
// probability, uniform prior.
SldsParams make_rotation_slds(std::size_t d, std::size_t num_modes,
                              real magnitude_deg, double switch_prob, Rng& rng);

// x_{t+1} = A x_t (+ B u_t) + eps_t. Control, when present, must have T rows;
// row t feeds the step t -> t+1.
Tensor simulate_lds(const LdsParams& params, const NoiseSpec& noise,
                    std::span<const real> x0, std::size_t T,
                    const Tensor* control, Rng& noise_rng);

// k_1 ~ Cat(prior); k_{t+1} ~ Cat(transition[k_t]).
std::vector<int> sample_markov_modes(const SldsParams& params, std::size_t T,
                                     Rng& mode_rng);

struct SldsRollout {
  Tensor latents;
  std::vector<int> modes;
};

SldsRollout simulate_slds(const SldsParams& params, const NoiseSpec& noise,
                          std::span<const real> x0, std::size_t T,
                          Rng& noise_rng, Rng& mode_rng);

// Forward Euler step of the Lorenz flow, exactly
//   f(x) = x + dt [ sigma (x2 - x1), x1 ((rho - x3) - x2), x1 x2 - beta x3 ].
void lorenz_step(const LorenzParams& params, std::span<const real> x,
                 std::span<real> out);

// Euler rollout with additive Gaussian noise after each step. Throws if the
// trajectory leaves |x| <= 1e6 (reduce dt).
Tensor simulate_lorenz(const LorenzParams& params, const NoiseSpec& noise,
                       std::span<const real> x0, std::size_t T, Rng& noise_rng);

// ---- control signals --------------------------------------------------------

enum class ControlKind { none, step, lds };

struct ControlSpec {
  ControlKind kind = ControlKind::none;
  std::size_t dims = 1;
  // Boxcar: zero outside a 200-step window centered in the trial with a
  // random offset; per-dimension magnitude ~ N(0, magnitude_std^2).
  std::size_t step_width = 200;
  real magnitude_std = 1.0;
  // For the lds kind: rotation-driven control dynamics.
  std::optional<LdsParams> lds;
  NoiseSpec lds_noise{0.01};
};

Tensor make_control(const ControlSpec& spec, std::size_t T, Rng& rng);

// ---- dataset-level generation ----------------------------------------------

enum class SystemKind { identity, lds, slds, lorenz, vmf };

struct SystemConfig {
  SystemKind kind = SystemKind::lds;
  std::size_t latent_dim = 3;
  real sigma_eps = 0.01;
  real angle_deg = 5.0;       // rotation magnitude (lds / slds)
  bool angles_uniform = false;  // draw angles from U[0, angle_deg] instead
  std::size_t num_modes = 5;  // slds bank size
  double switch_prob = 1e-4;
  real dt = 0.01;             // lorenz step size
  std::size_t trials = 100;
  std::size_t trial_len = 1000;
  ControlKind control = ControlKind::none;
  std::size_t control_dim = 1;
  real control_b_mean = 0.01;     // entries of B ~ N(mean, std^2)
  real control_b_std = 0.1;
  // vmf kind: non-uniform marginal on the 2-sphere; trials are (ref, pos)
  // pairs. kappa = 0 gives the uniform marginal.
  real vmf_kappa = 0.0;
  real vmf_kappa_pos = 10.0;
};

struct GeneratedSystem {
  TrajectoryDataset dataset;        // latents/modes/control only, no mixing
  std::optional<LdsParams> lds;     // the realized parameters, for oracles
  std::optional<SldsParams> slds;
  std::optional<LorenzParams> lorenz;
};

// Simulates `trials` trials of `trial_len` steps. Each trial draws its own
// RNG streams from (seed, trial index); x0 ~ N(0, I) per trial; SLDS modes
// restart from the prior each trial.
GeneratedSystem generate_latents(const SystemConfig& cfg, std::uint64_t seed);

// Unit vector on S^2 from a von Mises-Fisher distribution (d = 3 only).
void sample_vmf3(std::span<const real> mu, real kappa, Rng& rng,
                 std::span<real> out);

}  // namespace dcl
