#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcl/rng.hpp"
#include "dcl/systems.hpp"
#include "dcl/tape.hpp"

namespace dcl {

enum class SimilarityKind { neg_sq_euclidean, dot_product };

// ---- encoder -----------------------------------------------------------------

struct EncoderConfig {
  std::size_t input_dim = 50;
  std::size_t latent_dim = 3;
  // Three hidden layers [30d, 30d, 10d] unless overridden.
  std::vector<std::size_t> hidden;
  bool unit_sphere = false;  // normalize outputs (dot-product similarity)

  std::vector<std::size_t> hidden_or_default() const {
    if (!hidden.empty()) return hidden;
    return {30 * latent_dim, 30 * latent_dim, 10 * latent_dim};
  }
};

// MLP feature extractor h: GELU after each hidden layer, linear output,
// optional projection onto the unit sphere.
class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderConfig cfg, Rng& init_rng);

  Var forward(Tape& tape, Var y);
  Tensor forward_eval(const Tensor& y) const;

  std::vector<Parameter*> parameters();
  const EncoderConfig& config() const { return cfg_; }
  std::vector<Parameter>& raw_params() { return params_; }

 private:
  EncoderConfig cfg_;
  // Layout: weight/bias per layer, weights stored [in x out].
  std::vector<Parameter> params_;
};

// ---- dynamics models -----------------------------------------------------------

enum class DynamicsKind { identity, linear, grad_slds, oracle };

struct DynamicsConfig {
  DynamicsKind kind = DynamicsKind::identity;
  std::size_t latent_dim = 3;
  std::size_t num_modes = 1;  // grad_slds bank size K
  real gumbel_tau = 1.0;      // Gumbel-Softmax temperature
  bool bank_bias = false;     // affine pieces (Taylor view of non-linear f)
  real logit_guard = 1e-8;    // delta in 1 / (error + delta)
  bool use_control = false;
  std::size_t control_dim = 0;
};

// What an oracle model freezes: the realized ground-truth dynamics.
struct OracleDynamics {
  std::optional<LdsParams> lds;
  std::optional<SldsParams> slds;
  std::optional<LorenzParams> lorenz;
};

class DynamicsModel {
 public:
  DynamicsModel() = default;
  // Trainable kinds. grad_slds initializes every W_k near the identity.
  static DynamicsModel create(const DynamicsConfig& cfg, Rng& init_rng);
  // Frozen ground-truth dynamics; parameters() stays empty.
  static DynamicsModel create_oracle(const DynamicsConfig& cfg,
                                     OracleDynamics frozen);

  struct Forward {
    Var prediction;          // [N x d]
    std::optional<Var> z;    // Gumbel assignment probabilities [N x K]
  };

  // Train-mode forward pass. grad_slds requires `xhat_next` (the logits are
  // reciprocal prediction errors) and draws fresh Gumbel noise from
  // `gumbel_rng` when given. Oracle SLDS requires the true modes of the batch.
  Forward forward_train(Tape& tape, Var xhat_t, std::optional<Var> xhat_next,
                        const Tensor* control_rows,
                        std::span<const int> oracle_modes, Rng* gumbel_rng);

  // Hard argmin mode sequence over an encoded series (Eq.-style inference):
  // k_t = argmin_k ||W_k x_t - x_{t+1}||^2 within each trial; the final step
  // of a trial copies its predecessor. Only for mode-switching kinds.
  std::vector<int> infer_modes(
      const Tensor& xhat,
      const std::vector<std::pair<std::size_t, std::size_t>>& bounds) const;

  // Hard pointwise application (metrics): `mode` selects the bank entry for
  // switching kinds; `u` is the control row (may be empty).
  void apply_eval(std::span<const real> x, int mode, std::span<const real> u,
                  std::span<real> out) const;

  std::vector<Parameter*> parameters();
  const DynamicsConfig& config() const { return cfg_; }
  bool is_switching() const;
  bool needs_next_latent() const { return cfg_.kind == DynamicsKind::grad_slds; }
  const OracleDynamics& frozen() const { return frozen_; }

  // Accessors for metrics / persistence.
  const Tensor& linear_matrix() const;     // linear kind
  Tensor bank_matrix(std::size_t k) const; // grad_slds / oracle-slds entry
  std::vector<Parameter>& raw_params() { return params_; }
  const Tensor* control_matrix() const;    // trained B, when present

 private:
  DynamicsConfig cfg_;
  std::vector<Parameter> params_;
  OracleDynamics frozen_;
};

// ---- KDE correction ------------------------------------------------------------

// Non-parametric estimate of the embedded marginal log-density used as the
// alpha correction term in the score.
struct KdeCorrection {
  bool enabled = false;
  real epsilon = 1.0;  // Gaussian-kernel bandwidth (Euclidean geometry)
  real kappa = 20.0;   // vMF kernel concentration (sphere geometry)
  Tensor anchors;      // M x d embedded anchor set

  // log q-hat of each query row; throws when disabled or the anchor set is
  // empty. The vMF variant omits the constant normalizer C_p(kappa).
  Var log_density(Tape& tape, Var query, SimilarityKind sim) const;
  Tensor log_density_eval(const Tensor& query, SimilarityKind sim) const;
};

// ---- score ---------------------------------------------------------------------

// Full model score psi(y, y') = phi(fhat(h(y)), h(y')) - alpha(y') for a
// single pair, matching the training-time composition. For grad_slds the mode
// is the hard argmin against h(y').
real psi_score(Encoder& encoder, DynamicsModel& dynamics, SimilarityKind sim,
               const KdeCorrection* kde, std::span<const real> y,
               std::span<const real> y_prime,
               std::span<const real> control = {});

// ---- persistence ----------------------------------------------------------------

struct ModelBundle {
  Encoder encoder;
  std::optional<Encoder> encoder_positive;  // asymmetric variant: h2
  DynamicsModel dynamics;
  // Baselines (identity dynamics) get their dynamics metrics from a model
  // fitted post hoc on the recovered latents.
  std::optional<DynamicsModel> posthoc;
  SimilarityKind similarity = SimilarityKind::neg_sq_euclidean;

  // The dynamics model whose recovered-dynamics metrics should be reported.
  DynamicsModel& metric_dynamics() { return posthoc ? *posthoc : dynamics; }
};

void save_checkpoint(const std::filesystem::path& dir, ModelBundle& model,
                     const std::string& meta_json);
ModelBundle load_checkpoint(const std::filesystem::path& dir);
std::string load_checkpoint_meta(const std::filesystem::path& dir);

}  // namespace dcl
