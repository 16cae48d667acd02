#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcl/model.hpp"
#include "dcl/systems.hpp"
#include "dcl/training.hpp"

namespace dcl {

// Full experiment description. JSON shape mirrors the struct blocks; any key
// can be overridden from the command line via dotted paths.
struct DatasetBlock {
  SystemConfig system;
  std::size_t obs_dim = 50;
  std::size_t mixing_layers = 4;
  real cond_threshold = 6.0;
  // Rank-restricted (non-injective) mixing instead of the MLP.
  bool low_rank = false;
  std::size_t rank = 2;
  std::size_t low_rank_inner_layers = 0;
  // Time-lag embedding applied before the encoder (k = 1, tau = 0: off).
  std::size_t lag_k = 1;
  std::size_t lag_tau = 0;
};

struct ModelBlock {
  DynamicsKind dynamics = DynamicsKind::linear;
  std::size_t num_modes = 1;
  real gumbel_tau = 1.0;
  bool bank_bias = false;
  real logit_guard = 1e-8;
  SimilarityKind similarity = SimilarityKind::neg_sq_euclidean;
  bool kde = false;
  real kde_epsilon = 1.0;
  real kde_kappa = 20.0;
  bool asymmetric = false;
  bool use_control = false;
  std::vector<std::size_t> hidden;  // encoder override; empty = [30d,30d,10d]
  // Post-hoc dynamics fit for identity baselines: auto|none|linear|grad_slds.
  std::string posthoc = "auto";
  std::size_t posthoc_modes = 0;  // 0 = match the data
  long posthoc_steps = 2000;
  real posthoc_lr = 1e-2;
};

struct EvalBlock {
  std::vector<int> n_steps = {1};
  bool identity_variant = false;  // also report the identity-dynamics control
};

struct ExperimentConfig {
  DatasetBlock dataset;
  ModelBlock model;
  TrainConfig train;
  EvalBlock eval;
  std::vector<std::uint64_t> dataset_seeds = {1};
  std::vector<std::uint64_t> model_seeds = {1};
};

// JSON round trip. from_json applies defaults and validates kinds; errors are
// std::invalid_argument with the offending key in the message.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Stable 64-bit hex hash of the canonical (key-sorted) serialization.
std::string config_hash(const nlohmann::json& j);

// Applies "--set a.b.c=value" style overrides onto raw JSON.
void apply_override(nlohmann::json& j, const std::string& assignment);

ExperimentConfig load_config_file(const std::filesystem::path& path,
                                  const std::vector<std::string>& overrides);

}  // namespace dcl
