#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "dcl/config.hpp"
#include "dcl/evaluation.hpp"
#include "dcl/mixing.hpp"
#include "dcl/training.hpp"

namespace dcl {

inline constexpr const char* kVersionTag = "dcl-0.1.0";

// A generated dataset plus the view the model actually consumes (time-lag
// stacked when configured; otherwise the same data).
struct PreparedData {
  GeneratedSystem system;
  TrajectoryDataset data;
  TrajectoryDataset view;
};

PreparedData prepare_dataset(const DatasetBlock& block, std::uint64_t seed);

// Builds the training view for already-materialized artifacts (CLI paths).
PreparedData make_view(GeneratedSystem system, TrajectoryDataset data,
                       const DatasetBlock& block);

// Builds encoder + dynamics for this config; the model seed controls
// initialization (separate streams for encoder and dynamics).
ModelBundle build_model(const ExperimentConfig& cfg, const PreparedData& data,
                        std::uint64_t model_seed);

// Identity baselines: fit the configured dynamics on the recovered latents.
void fit_posthoc_dynamics(const ExperimentConfig& cfg, const PreparedData& data,
                          ModelBundle& model, std::uint64_t model_seed);

MetricsReport evaluate_model(const ExperimentConfig& cfg,
                             const PreparedData& data, ModelBundle& model);

struct RunRecord {
  std::uint64_t dataset_seed = 0;
  std::uint64_t model_seed = 0;
  MetricsReport metrics;
  double wall_seconds = 0;
  real first_loss = 0, final_loss = 0, min_loss = 0;
  long steps = 0;
  std::string error;  // nonempty when the run failed

  bool ok() const { return error.empty(); }
};

// Train + (posthoc) + evaluate for one (dataset, model seed) pair.
RunRecord run_single(const ExperimentConfig& cfg, const PreparedData& data,
                     std::uint64_t model_seed);

nlohmann::json metrics_to_json(const MetricsReport& m);
nlohmann::json run_record_to_json(const std::string& cfg_hash,
                                  const RunRecord& r);
void append_jsonl(const std::filesystem::path& path, const nlohmann::json& j);

// Ground-truth parameter persistence next to the dataset arrays.
void save_generated(const std::filesystem::path& dir, const GeneratedSystem& g,
                    const std::string& config_json);
GeneratedSystem load_generated(const std::filesystem::path& dir);

// Results root: --out flags override, else $DCL_RESULTS_ROOT, else ./results.
std::filesystem::path results_root();

}  // namespace dcl
