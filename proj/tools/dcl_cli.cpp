// Command-line front end: dataset generation, training, evaluation, and
// benchmark suites. Exit codes: 0 ok, 2 config error, 3 training divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "dcl/benchmark.hpp"
#include "dcl/experiment.hpp"

namespace {

using namespace dcl;
using nlohmann::json;

int cmd_generate(const std::string& config_path,
                 const std::vector<std::string>& overrides,
                 const std::string& out_dir, std::uint64_t seed_flag) {
  ExperimentConfig cfg = load_config_file(config_path, overrides);
  const std::uint64_t seed = seed_flag != 0 ? seed_flag : cfg.dataset_seeds.at(0);
  PreparedData data = prepare_dataset(cfg.dataset, seed);
  const std::string cfg_json = config_to_json(cfg).dump(2);
  save_dataset(out_dir, data.data, cfg_json);
  save_generated(out_dir, data.system, "");
  std::printf("wrote dataset: T=%zu d=%zu D=%zu trials=%zu seed=%llu -> %s\n",
              data.data.num_steps(), data.data.latent_dim(),
              data.data.observations.cols(), data.data.trial_bounds.size(),
              static_cast<unsigned long long>(seed), out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& dataset_dir, const std::string& out_dir,
              std::uint64_t model_seed_flag) {
  ExperimentConfig cfg = load_config_file(config_path, overrides);
  TrajectoryDataset ds = load_dataset(dataset_dir);
  GeneratedSystem system = load_generated(dataset_dir);
  PreparedData data = make_view(std::move(system), std::move(ds), cfg.dataset);

  const std::uint64_t model_seed =
      model_seed_flag != 0 ? model_seed_flag : cfg.model_seeds.at(0);

  ModelBundle model = build_model(cfg, data, model_seed);
  TrainConfig tc = cfg.train;
  tc.seed = model_seed;
  TrainResult tr = train(data.view, model, tc);
  fit_posthoc_dynamics(cfg, data, model, model_seed);
  MetricsReport metrics = evaluate_model(cfg, data, model);

  json meta;
  meta["config"] = config_to_json(cfg);
  meta["dataset_seed"] = data.data.seed;
  meta["model_seed"] = model_seed;
  meta["loss_trace_tail"] = std::vector<real>(
      tr.loss_trace.end() - std::min<std::size_t>(tr.loss_trace.size(), 50),
      tr.loss_trace.end());
  save_checkpoint(out_dir, model, meta.dump(2));

  RunRecord rec;
  rec.dataset_seed = data.data.seed;
  rec.model_seed = model_seed;
  rec.metrics = metrics;
  rec.steps = static_cast<long>(tr.loss_trace.size());
  if (!tr.loss_trace.empty()) {
    rec.first_loss = tr.loss_trace.front();
    rec.final_loss = tr.loss_trace.back();
    rec.min_loss = *std::min_element(tr.loss_trace.begin(), tr.loss_trace.end());
  }
  append_jsonl(results_root() / "records.jsonl",
               run_record_to_json(config_hash(config_to_json(cfg)), rec));

  std::printf("trained %ld steps; final loss %.6f\n", rec.steps,
              double(rec.final_loss));
  std::printf("metrics: %s\n", metrics_to_json(metrics).dump().c_str());
  std::printf("checkpoint -> %s\n", out_dir.c_str());
  return 0;
}

int cmd_evaluate(const std::string& checkpoint_dir,
                 const std::string& dataset_dir,
                 const std::vector<std::string>& overrides,
                 const std::string& out_path) {
  ModelBundle model = load_checkpoint(checkpoint_dir);
  json meta = json::parse(load_checkpoint_meta(checkpoint_dir));
  json cfg_json = meta.value("config", json::object());
  for (const auto& o : overrides) apply_override(cfg_json, o);
  ExperimentConfig cfg = config_from_json(cfg_json);

  TrajectoryDataset ds = load_dataset(dataset_dir);
  GeneratedSystem system = load_generated(dataset_dir);
  PreparedData data = make_view(std::move(system), std::move(ds), cfg.dataset);

  if (data.view.observations.cols() != model.encoder.config().input_dim)
    throw std::invalid_argument(
        "dataset/checkpoint dimension mismatch: encoder expects " +
        std::to_string(model.encoder.config().input_dim) + " inputs, got " +
        std::to_string(data.view.observations.cols()));

  MetricsReport metrics = evaluate_model(cfg, data, model);
  json record = run_record_to_json(config_hash(config_to_json(cfg)), [&] {
    RunRecord r;
    r.dataset_seed = data.data.seed;
    r.model_seed = meta.value("model_seed", 0ull);
    r.metrics = metrics;
    return r;
  }());
  const std::filesystem::path record_path =
      out_path.empty() ? results_root() / "records.jsonl"
                       : std::filesystem::path(out_path);
  append_jsonl(record_path, record);
  std::printf("metrics: %s\n", metrics_to_json(metrics).dump().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dcl: contrastive estimation of latent dynamical systems"};
  app.require_subcommand(1);

  std::string config_path, dataset_dir, out_dir, checkpoint_dir, out_path;
  std::vector<std::string> overrides;
  std::uint64_t seed_flag = 0;

  auto* gen = app.add_subcommand("generate", "simulate and persist a dataset");
  gen->add_option("--config", config_path, "experiment config JSON")->required();
  gen->add_option("--out", out_dir, "output dataset directory")->required();
  gen->add_option("--set", overrides, "override config keys (a.b.c=value)");
  gen->add_option("--seed", seed_flag, "dataset seed (default: first in config)");

  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  tr->add_option("--config", config_path, "experiment config JSON")->required();
  tr->add_option("--dataset", dataset_dir, "dataset directory")->required();
  tr->add_option("--out", out_dir, "checkpoint directory")->required();
  tr->add_option("--set", overrides, "override config keys");
  tr->add_option("--model-seed", seed_flag, "model seed (default: first in config)");

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  ev->add_option("--dataset", dataset_dir, "dataset directory")->required();
  ev->add_option("--set", overrides, "override eval config keys");
  ev->add_option("--out", out_path, "results JSONL path");

  std::string suite_name, scale = "desk";
  int jobs = 1;
  std::vector<std::uint64_t> ds_seeds, m_seeds;
  auto* bench = app.add_subcommand("benchmark", "run a benchmark suite");
  bench->add_option("--suite", suite_name, "suite name")->required();
  bench->add_option("--out", out_dir, "output directory")->required();
  bench->add_option("--scale", scale, "desk (default) or smoke");
  bench->add_option("--jobs", jobs, "worker threads");
  bench->add_option("--dataset-seeds", ds_seeds, "override dataset seeds");
  bench->add_option("--model-seeds", m_seeds, "override model seeds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(config_path, overrides, out_dir, seed_flag);
    if (tr->parsed())
      return cmd_train(config_path, overrides, dataset_dir, out_dir, seed_flag);
    if (ev->parsed())
      return cmd_evaluate(checkpoint_dir, dataset_dir, overrides, out_path);
    if (bench->parsed()) {
      dcl::SuiteOptions opt;
      opt.name = suite_name;
      opt.out_dir = out_dir;
      opt.scale = scale;
      opt.jobs = jobs;
      opt.dataset_seeds = ds_seeds;
      opt.model_seeds = m_seeds;
      const int failures = dcl::run_suite(opt);
      return failures == 0 ? 0 : 1;
    }
  } catch (const dcl::DivergenceError& e) {
    std::fprintf(stderr, "divergence at step %ld: %s\n", e.step(), e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
