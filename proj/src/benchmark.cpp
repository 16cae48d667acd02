#include "dcl/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace dcl {

using nlohmann::json;

// ---- presets -------------------------------------------------------------------

namespace {

TrainConfig desk_train(long steps, real lr) {
  TrainConfig t;
  t.steps = steps;
  t.lr_encoder = lr;
  t.lr_dynamics = 1e-2;
  t.batch.batch_size = 256;
  t.batch.num_negatives = 1024;
  t.batch.pos_offset = 1;
  return t;
}

void desk_seeds(ExperimentConfig& cfg) {
  cfg.dataset_seeds = {1};
  cfg.model_seeds = {1};
}

}  // namespace

ExperimentConfig preset_lds_desk() {
  ExperimentConfig cfg;
  cfg.dataset.system.kind = SystemKind::lds;
  cfg.dataset.system.latent_dim = 3;
  cfg.dataset.system.sigma_eps = 0.01;
  cfg.dataset.system.angle_deg = 5;
  cfg.dataset.system.trials = 100;
  cfg.dataset.system.trial_len = 1000;
  cfg.dataset.obs_dim = 50;
  cfg.dataset.mixing_layers = 4;
  cfg.model.dynamics = DynamicsKind::linear;
  cfg.train = desk_train(4000, 1e-3);
  desk_seeds(cfg);
  return cfg;
}

ExperimentConfig preset_slds_desk() {
  ExperimentConfig cfg;
  cfg.dataset.system.kind = SystemKind::slds;
  cfg.dataset.system.latent_dim = 6;
  cfg.dataset.system.sigma_eps = 1e-4;
  cfg.dataset.system.angle_deg = 10;
  cfg.dataset.system.num_modes = 5;
  cfg.dataset.system.switch_prob = 1e-4;
  cfg.dataset.system.trials = 100;
  cfg.dataset.system.trial_len = 1000;
  cfg.model.dynamics = DynamicsKind::grad_slds;
  cfg.model.num_modes = 0;  // match the data
  cfg.train = desk_train(6000, 1e-3);
  desk_seeds(cfg);
  return cfg;
}

ExperimentConfig preset_lorenz_desk(real dt, real sigma_eps) {
  ExperimentConfig cfg;
  cfg.dataset.system.kind = SystemKind::lorenz;
  cfg.dataset.system.dt = dt;
  cfg.dataset.system.sigma_eps = sigma_eps;
  cfg.dataset.system.trials = 100;
  cfg.dataset.system.trial_len = 1000;
  cfg.model.dynamics = DynamicsKind::grad_slds;
  cfg.model.num_modes = 20;
  cfg.model.bank_bias = true;
  cfg.train = desk_train(5000, 1e-3);
  desk_seeds(cfg);
  return cfg;
}

ExperimentConfig preset_control_desk(ControlKind kind) {
  ExperimentConfig cfg;
  cfg.dataset.system.kind = SystemKind::lds;
  cfg.dataset.system.latent_dim = 5;
  cfg.dataset.system.sigma_eps = 0.001;
  cfg.dataset.system.angle_deg = 10;
  cfg.dataset.system.angles_uniform = true;
  cfg.dataset.system.trials = 100;
  cfg.dataset.system.trial_len = 1000;
  cfg.dataset.system.control = kind;
  cfg.dataset.system.control_dim = kind == ControlKind::lds ? 5 : 1;
  cfg.model.dynamics = DynamicsKind::linear;
  cfg.model.use_control = true;
  cfg.train = desk_train(5000, 1e-3);
  desk_seeds(cfg);
  return cfg;
}

ExperimentConfig preset_noninjective_desk(std::size_t rank, std::size_t lag_k,
                                          std::size_t lag_tau) {
  ExperimentConfig cfg;
  cfg.dataset.system.kind = SystemKind::lds;
  cfg.dataset.system.latent_dim = 6;
  cfg.dataset.system.sigma_eps = 0.01;
  cfg.dataset.system.angle_deg = 5;
  cfg.dataset.system.trials = 100;
  cfg.dataset.system.trial_len = 1000;
  cfg.dataset.low_rank = true;
  cfg.dataset.rank = rank;
  cfg.dataset.low_rank_inner_layers = 0;
  cfg.dataset.lag_k = lag_k;
  cfg.dataset.lag_tau = lag_tau;
  cfg.model.dynamics = DynamicsKind::linear;
  cfg.train = desk_train(5000, 1e-3);
  desk_seeds(cfg);
  return cfg;
}

ExperimentConfig preset_kde_desk(real marginal_kappa, bool kde_enabled) {
  ExperimentConfig cfg;
  cfg.dataset.system.kind = SystemKind::vmf;
  cfg.dataset.system.vmf_kappa = marginal_kappa;
  cfg.dataset.system.vmf_kappa_pos = 16.0;
  cfg.dataset.system.trials = 20000;  // (reference, positive) pairs
  cfg.dataset.system.trial_len = 2;
  cfg.model.dynamics = DynamicsKind::identity;
  cfg.model.similarity = SimilarityKind::dot_product;
  cfg.model.kde = kde_enabled;
  cfg.model.kde_kappa = 16.0;
  cfg.model.posthoc = "none";
  cfg.train = desk_train(3000, 1e-3);
  cfg.train.kde_enabled = kde_enabled;
  cfg.train.kde_kappa = 16.0;
  cfg.train.batch.num_negatives = 512;
  desk_seeds(cfg);
  return cfg;
}

void set_model_dynamics(ExperimentConfig& cfg, DynamicsKind kind,
                        std::size_t num_modes) {
  cfg.model.dynamics = kind;
  cfg.model.use_control = cfg.model.use_control &&
                          (kind == DynamicsKind::identity ||
                           kind == DynamicsKind::linear);
  if (kind == DynamicsKind::grad_slds) {
    if (num_modes > 0) {
      cfg.model.num_modes = num_modes;
    } else if (cfg.dataset.system.kind == SystemKind::slds) {
      cfg.model.num_modes = 0;  // match data
    } else {
      cfg.model.num_modes = 20;
    }
    cfg.model.bank_bias = cfg.dataset.system.kind == SystemKind::lorenz;
  } else {
    cfg.model.num_modes = num_modes > 0 ? num_modes : 1;
    cfg.model.bank_bias = false;
  }
}

// ---- suites ---------------------------------------------------------------------

namespace {

void shrink_to_smoke(ExperimentConfig& cfg) {
  cfg.dataset.system.trials = std::min<std::size_t>(cfg.dataset.system.trials, 20);
  cfg.dataset.system.trial_len =
      std::min<std::size_t>(cfg.dataset.system.trial_len, 250);
  if (cfg.dataset.system.kind == SystemKind::vmf)
    cfg.dataset.system.trials = 2000;
  if (cfg.dataset.lag_tau >= cfg.dataset.system.trial_len)
    cfg.dataset.lag_tau = 50;
  cfg.train.steps = std::min<long>(cfg.train.steps, 60);
  cfg.train.batch.batch_size = 64;
  cfg.train.batch.num_negatives = 128;
  cfg.model.posthoc_steps = std::min<long>(cfg.model.posthoc_steps, 100);
}

std::vector<SuiteCell> suite_table1() {
  std::vector<SuiteCell> cells;
  auto add = [&](std::string label, ExperimentConfig cfg) {
    cells.push_back({std::move(label), std::move(cfg)});
  };

  {  // identity data
    ExperimentConfig base = preset_lds_desk();
    base.dataset.system.kind = SystemKind::identity;
    ExperimentConfig c = base;
    set_model_dynamics(c, DynamicsKind::identity);
    add("f=identity fhat=identity", c);
    c = base;
    set_model_dynamics(c, DynamicsKind::linear);
    add("f=identity fhat=lds", c);
  }
  {  // lds, noise-dominated (low angle, large sigma)
    ExperimentConfig base = preset_lds_desk();
    base.dataset.system.angle_deg = 2;
    base.dataset.system.sigma_eps = 0.1;
    ExperimentConfig c = base;
    set_model_dynamics(c, DynamicsKind::identity);
    add("f=lds(low dt) sigma=large fhat=identity", c);
  }
  {  // lds
    ExperimentConfig base = preset_lds_desk();
    for (auto [kind, name] :
         {std::pair{DynamicsKind::identity, "identity"},
          std::pair{DynamicsKind::linear, "lds"},
          std::pair{DynamicsKind::oracle, "gt"}}) {
      ExperimentConfig c = base;
      set_model_dynamics(c, kind);
      add(std::string("f=lds fhat=") + name, c);
    }
  }
  {  // slds
    ExperimentConfig base = preset_slds_desk();
    for (auto [kind, name] :
         {std::pair{DynamicsKind::identity, "identity"},
          std::pair{DynamicsKind::grad_slds, "grad_slds"},
          std::pair{DynamicsKind::oracle, "gt"}}) {
      ExperimentConfig c = base;
      set_model_dynamics(c, kind);
      add(std::string("f=slds fhat=") + name, c);
    }
  }
  for (auto [dt, sigma, tag] :
       {std::tuple{real(0.0005), real(0.1), "lorenz(small dt) sigma=large"},
        std::tuple{real(0.01), real(0.001), "lorenz"}}) {
    ExperimentConfig base = preset_lorenz_desk(dt, sigma);
    for (auto [kind, name] :
         {std::pair{DynamicsKind::identity, "identity"},
          std::pair{DynamicsKind::linear, "lds"},
          std::pair{DynamicsKind::grad_slds, "grad_slds"}}) {
      ExperimentConfig c = base;
      set_model_dynamics(c, kind);
      add(std::string("f=") + tag + " fhat=" + name, c);
    }
  }
  return cells;
}

std::vector<SuiteCell> suite_slds_angles() {
  std::vector<SuiteCell> cells;
  for (real sigma : {real(1e-4), real(1e-2)}) {
    for (real angle : {real(5), real(10), real(20)}) {
      for (auto [kind, name] :
           {std::pair{DynamicsKind::identity, "identity"},
            std::pair{DynamicsKind::grad_slds, "grad_slds"},
            std::pair{DynamicsKind::oracle, "gt"}}) {
        ExperimentConfig c = preset_slds_desk();
        c.dataset.system.sigma_eps = sigma;
        c.dataset.system.angle_deg = angle;
        set_model_dynamics(c, kind);
        char label[96];
        std::snprintf(label, sizeof(label), "sigma=%g angle=%g fhat=%s",
                      double(sigma), double(angle), name);
        cells.push_back({label, c});
      }
    }
  }
  return cells;
}

std::vector<SuiteCell> suite_lorenz() {
  std::vector<SuiteCell> cells;
  for (auto [dt, sigma] :
       {std::pair{real(0.0005), real(0.1)}, std::pair{real(0.01), real(0.001)}}) {
    for (auto [kind, name] :
         {std::pair{DynamicsKind::identity, "identity"},
          std::pair{DynamicsKind::linear, "lds"},
          std::pair{DynamicsKind::grad_slds, "grad_slds"}}) {
      ExperimentConfig c = preset_lorenz_desk(dt, sigma);
      set_model_dynamics(c, kind);
      char label[96];
      std::snprintf(label, sizeof(label), "dt=%g sigma=%g fhat=%s", double(dt),
                    double(sigma), name);
      cells.push_back({label, c});
    }
  }
  return cells;
}

std::vector<SuiteCell> suite_ablations() {
  std::vector<SuiteCell> cells;
  auto base = preset_slds_desk();
  auto add = [&](const std::string& label, const ExperimentConfig& c) {
    cells.push_back({label, c});
  };
  for (std::size_t len : {100ul, 1000ul}) {  // samples per trial
    ExperimentConfig c = base;
    c.dataset.system.trial_len = len;
    c.dataset.system.trials = 100000 / len;
    add("samples_per_trial=" + std::to_string(len), c);
  }
  for (std::size_t trials : {20ul, 100ul}) {
    ExperimentConfig c = base;
    c.dataset.system.trials = trials;
    add("trials=" + std::to_string(trials), c);
  }
  for (std::size_t layers : {1ul, 4ul, 6ul}) {
    ExperimentConfig c = base;
    c.dataset.mixing_layers = layers;
    add("mixing_layers=" + std::to_string(layers), c);
  }
  for (std::size_t d : {3ul, 6ul, 9ul}) {
    ExperimentConfig c = base;
    c.dataset.system.latent_dim = d;
    add("d=" + std::to_string(d), c);
  }
  for (std::size_t modes : {2ul, 5ul, 10ul}) {
    ExperimentConfig c = base;
    c.dataset.system.num_modes = modes;
    add("modes=" + std::to_string(modes), c);
  }
  for (double p : {1e-4, 1e-2, 1e-1}) {
    ExperimentConfig c = base;
    c.dataset.system.switch_prob = p;
    char label[48];
    std::snprintf(label, sizeof(label), "switch_prob=%g", p);
    add(label, c);
  }
  return cells;
}

std::vector<SuiteCell> suite_lorenz_modes() {
  std::vector<SuiteCell> cells;
  for (std::size_t k : {2ul, 10ul, 50ul}) {
    ExperimentConfig c = preset_lorenz_desk(0.01, 0.001);
    set_model_dynamics(c, DynamicsKind::grad_slds, k);
    cells.push_back({"K=" + std::to_string(k), c});
  }
  return cells;
}

std::vector<SuiteCell> suite_control() {
  std::vector<SuiteCell> cells;
  for (auto [kind, kname] :
       {std::pair{ControlKind::step, "step"}, std::pair{ControlKind::lds, "lds"}}) {
    ExperimentConfig base = preset_control_desk(kind);
    {
      ExperimentConfig c = base;
      set_model_dynamics(c, DynamicsKind::identity);
      c.model.use_control = true;
      cells.push_back({std::string("u=") + kname + " fhat=identity+Bu", c});
    }
    {
      ExperimentConfig c = base;
      c.model.use_control = false;
      cells.push_back({std::string("u=") + kname + " fhat=lds", c});
    }
    {
      ExperimentConfig c = base;
      cells.push_back({std::string("u=") + kname + " fhat=lds+Bu", c});
    }
  }
  return cells;
}

std::vector<SuiteCell> suite_noninjective() {
  std::vector<SuiteCell> cells;
  for (std::size_t rank : {1ul, 2ul, 3ul}) {
    for (std::size_t k : {1ul, 3ul, 5ul}) {
      ExperimentConfig c =
          preset_noninjective_desk(rank, k, k == 1 ? 0 : 100);
      char label[64];
      std::snprintf(label, sizeof(label), "rank=%zu k=%zu", rank, k);
      cells.push_back({label, c});
    }
  }
  return cells;
}

std::vector<SuiteCell> suite_kde() {
  std::vector<SuiteCell> cells;
  for (real kappa : {real(0), real(4), real(16)}) {
    for (bool on : {false, true}) {
      ExperimentConfig c = preset_kde_desk(kappa, on);
      char label[64];
      std::snprintf(label, sizeof(label), "kappa=%g kde=%s", double(kappa),
                    on ? "on" : "off");
      cells.push_back({label, c});
    }
  }
  return cells;
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"table1",       "slds_angles", "lorenz", "ablations",
          "lorenz_modes", "control",     "noninjective", "kde"};
}

std::vector<SuiteCell> build_suite(const std::string& name,
                                   const std::string& scale) {
  std::vector<SuiteCell> cells;
  if (name == "table1") cells = suite_table1();
  else if (name == "slds_angles") cells = suite_slds_angles();
  else if (name == "lorenz") cells = suite_lorenz();
  else if (name == "ablations") cells = suite_ablations();
  else if (name == "lorenz_modes") cells = suite_lorenz_modes();
  else if (name == "control") cells = suite_control();
  else if (name == "noninjective") cells = suite_noninjective();
  else if (name == "kde") cells = suite_kde();
  else
    throw std::invalid_argument("unknown suite '" + name + "'");
  if (cells.empty()) throw std::invalid_argument("suite grid is empty");
  if (scale == "smoke") {
    for (auto& cell : cells) shrink_to_smoke(cell.config);
  } else if (scale != "desk") {
    throw std::invalid_argument("unknown scale '" + scale + "'");
  }
  return cells;
}

// ---- execution -------------------------------------------------------------------

namespace {

struct Aggregate {
  std::map<std::string, std::vector<double>> values;

  void add(const MetricsReport& m) {
    json j = metrics_to_json(m);
    for (auto it = j.begin(); it != j.end(); ++it)
      values[it.key()].push_back(it.value().get<double>());
  }

  json to_json() const {
    json out = json::object();
    for (const auto& [key, v] : values) {
      double mean = 0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0;
      for (double x : v) var += (x - mean) * (x - mean);
      var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
      std::vector<double> sorted = v;
      std::sort(sorted.begin(), sorted.end());
      const double median = sorted.size() % 2 == 1
                                ? sorted[sorted.size() / 2]
                                : 0.5 * (sorted[sorted.size() / 2 - 1] +
                                         sorted[sorted.size() / 2]);
      out[key] = {{"mean", mean},
                  {"std", std::sqrt(var)},
                  {"median", median},
                  {"n", v.size()}};
    }
    return out;
  }
};

}  // namespace

int run_suite(const SuiteOptions& opt) {
  std::vector<SuiteCell> cells = build_suite(opt.name, opt.scale);
  for (auto& cell : cells) {
    if (!opt.dataset_seeds.empty()) cell.config.dataset_seeds = opt.dataset_seeds;
    if (!opt.model_seeds.empty()) cell.config.model_seeds = opt.model_seeds;
  }
  std::filesystem::create_directories(opt.out_dir);
  const auto results_path = opt.out_dir / "results.jsonl";

  struct Task {
    std::size_t cell;
    std::uint64_t dataset_seed;
    std::uint64_t model_seed;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (auto ds : cells[c].config.dataset_seeds)
      for (auto ms : cells[c].config.model_seeds) tasks.push_back({c, ds, ms});

  std::mutex mu;
  std::map<std::string, std::shared_ptr<PreparedData>> dataset_cache;
  std::vector<Aggregate> aggregates(cells.size());
  std::vector<std::vector<std::string>> errors(cells.size());
  std::size_t next_task = 0;
  int failures = 0;

  auto worker = [&]() {
    for (;;) {
      std::size_t id;
      {
        std::lock_guard lock(mu);
        if (next_task >= tasks.size()) return;
        id = next_task++;
      }
      const Task& task = tasks[id];
      const SuiteCell& cell = cells[task.cell];

      std::shared_ptr<PreparedData> data;
      std::string cache_key;
      {
        json dj = config_to_json(cell.config)["dataset"];
        cache_key = dj.dump() + "#" + std::to_string(task.dataset_seed);
        std::lock_guard lock(mu);
        auto it = dataset_cache.find(cache_key);
        if (it != dataset_cache.end()) data = it->second;
      }
      RunRecord rec;
      try {
        if (!data) {
          data = std::make_shared<PreparedData>(
              prepare_dataset(cell.config.dataset, task.dataset_seed));
          std::lock_guard lock(mu);
          dataset_cache.emplace(cache_key, data);
        }
        rec = run_single(cell.config, *data, task.model_seed);
        rec.dataset_seed = task.dataset_seed;
      } catch (const std::exception& e) {
        rec.dataset_seed = task.dataset_seed;
        rec.model_seed = task.model_seed;
        rec.error = e.what();
      }

      json record = run_record_to_json(config_hash(config_to_json(cell.config)), rec);
      record["suite"] = opt.name;
      record["cell"] = cell.label;
      {
        std::lock_guard lock(mu);
        append_jsonl(results_path, record);
        if (rec.ok()) {
          aggregates[task.cell].add(rec.metrics);
        } else {
          errors[task.cell].push_back(rec.error);
          ++failures;
        }
      }
    }
  };

  const int jobs = std::max(1, opt.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  json summary = json::object();
  summary["suite"] = opt.name;
  summary["scale"] = opt.scale;
  json cell_json = json::array();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    json entry;
    entry["cell"] = cells[c].label;
    entry["config_hash"] = config_hash(config_to_json(cells[c].config));
    entry["metrics"] = aggregates[c].to_json();
    if (!errors[c].empty()) entry["errors"] = errors[c];
    cell_json.push_back(entry);
  }
  summary["cells"] = cell_json;
  {
    std::ofstream out(opt.out_dir / "summary.json");
    out << summary.dump(2) << "\n";
  }

  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::printf("%-44s", cells[c].label.c_str());
    json m = aggregates[c].to_json();
    for (const char* key : {"r2_latent", "lds_error", "dyn_r2",
                            "cluster_accuracy", "mcc"}) {
      if (m.contains(key))
        std::printf("  %s=%.4f+-%.4f", key, m[key]["mean"].get<double>(),
                    m[key]["std"].get<double>());
    }
    if (!errors[c].empty())
      std::printf("  [%zu failed]", errors[c].size());
    std::printf("\n");
  }
  return failures;
}

}  // namespace dcl
