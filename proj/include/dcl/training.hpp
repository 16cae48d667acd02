#pragma once

#include <optional>
#include <vector>

#include "dcl/adam.hpp"
#include "dcl/dataset.hpp"
#include "dcl/model.hpp"
#include "dcl/rng.hpp"

namespace dcl {

// ---- batch construction -------------------------------------------------------

struct BatchSpec {
  std::size_t batch_size = 512;     // reference/positive pairs per step
  std::size_t num_negatives = 4096; // shared across the batch
  std::size_t pos_offset = 1;       // positive = reference + offset, in-trial
};

struct Batch {
  std::vector<std::size_t> refs;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

// References are uniform over positions with an in-trial successor at the
// configured offset; negatives are uniform over all T indices (collisions
// with references or positives are allowed).
class BatchSampler {
 public:
  BatchSampler(const TrajectoryDataset& ds, BatchSpec spec);
  Batch sample(Rng& rng) const;
  const std::vector<std::size_t>& valid_references() const { return valid_refs_; }
  std::size_t total_steps() const { return total_steps_; }

 private:
  BatchSpec spec_;
  std::size_t total_steps_;
  std::vector<std::size_t> valid_refs_;
};

// Gathers dataset rows into a dense batch tensor.
Tensor gather_rows(const Tensor& source, std::span<const std::size_t> idx);

// ---- InfoNCE -------------------------------------------------------------------

// loss = mean_b [ -psi(b, pos_b) + log sum_{c in negatives + {pos_b}} exp psi(b, c) ]
// from precomputed score tensors. Stable under max-shift.
real infonce_loss_from_scores(const Tensor& pos_scores, const Tensor& neg_scores);

struct StepGraph {
  Var loss;
  Var pos_scores;           // [N]
  Var neg_scores;           // [N x M]
  std::optional<Var> z;     // Gumbel assignments when the dynamics switch
};

// Builds the full differentiable training-step graph on `tape`.
StepGraph build_step_graph(Tape& tape, ModelBundle& model,
                           const KdeCorrection& kde, const Tensor& y_ref,
                           const Tensor& y_pos, const Tensor& y_neg,
                           const Tensor* control_ref,
                           std::span<const int> oracle_modes, Rng* gumbel_rng);

// ---- training loop ---------------------------------------------------------------

struct TrainConfig {
  long steps = 5000;
  real lr_encoder = 3e-4;
  real lr_dynamics = 1e-2;
  std::uint64_t seed = 0;
  BatchSpec batch;
  bool train_encoder = true;
  bool train_dynamics = true;
  bool kde_enabled = false;
  real kde_epsilon = 1.0;
  real kde_kappa = 20.0;
  AdamConfig adam;  // lr fields above override adam.lr per group

  void validate() const;
};

struct TrainResult {
  std::vector<real> loss_trace;
};

// Runs steps of sample -> loss -> grad -> Adam with separate encoder and
// dynamics groups. Deterministic in (seed, config, dataset, initial model).
// Throws DivergenceError on NaN/Inf loss or loss > 10 log(M+1).
TrainResult train(const TrajectoryDataset& ds, ModelBundle& model,
                  const TrainConfig& cfg);

// ---- post-hoc dynamics fitting ------------------------------------------------

struct PosthocConfig {
  long steps = 3000;
  real lr = 1e-2;
  std::size_t batch_size = 4096;  // 0 = full batch
  std::uint64_t seed = 0;
};

// Fits a dynamics model on recovered latents by minimizing the predictive
// mean squared error over in-trial pairs; the encoder is untouched.
DynamicsModel posthoc_fit_dynamics(
    const Tensor& xhat,
    const std::vector<std::pair<std::size_t, std::size_t>>& trial_bounds,
    const Tensor* control, DynamicsConfig dyn_cfg, const PosthocConfig& cfg);

}  // namespace dcl
