#include "dcl/config.hpp"

#include <fstream>

namespace dcl {

using nlohmann::json;

namespace {

SystemKind system_kind_from(const std::string& s) {
  if (s == "identity") return SystemKind::identity;
  if (s == "lds") return SystemKind::lds;
  if (s == "slds") return SystemKind::slds;
  if (s == "lorenz") return SystemKind::lorenz;
  if (s == "vmf") return SystemKind::vmf;
  throw std::invalid_argument("dataset.system: unknown kind '" + s + "'");
}

const char* system_kind_name(SystemKind k) {
  switch (k) {
    case SystemKind::identity: return "identity";
    case SystemKind::lds: return "lds";
    case SystemKind::slds: return "slds";
    case SystemKind::lorenz: return "lorenz";
    case SystemKind::vmf: return "vmf";
  }
  return "?";
}

ControlKind control_kind_from(const std::string& s) {
  if (s == "none") return ControlKind::none;
  if (s == "step") return ControlKind::step;
  if (s == "lds") return ControlKind::lds;
  throw std::invalid_argument("dataset.control: unknown kind '" + s + "'");
}

const char* control_kind_name(ControlKind k) {
  switch (k) {
    case ControlKind::none: return "none";
    case ControlKind::step: return "step";
    case ControlKind::lds: return "lds";
  }
  return "?";
}

DynamicsKind dynamics_kind_from(const std::string& s) {
  if (s == "identity") return DynamicsKind::identity;
  if (s == "linear") return DynamicsKind::linear;
  if (s == "grad_slds") return DynamicsKind::grad_slds;
  if (s == "oracle") return DynamicsKind::oracle;
  throw std::invalid_argument("model.dynamics: unknown kind '" + s + "'");
}

const char* dynamics_kind_name(DynamicsKind k) {
  switch (k) {
    case DynamicsKind::identity: return "identity";
    case DynamicsKind::linear: return "linear";
    case DynamicsKind::grad_slds: return "grad_slds";
    case DynamicsKind::oracle: return "oracle";
  }
  return "?";
}

SimilarityKind similarity_from(const std::string& s) {
  if (s == "neg_sq_euclidean") return SimilarityKind::neg_sq_euclidean;
  if (s == "dot_product") return SimilarityKind::dot_product;
  throw std::invalid_argument("model.similarity: unknown kind '" + s + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config key '") + key +
                                "': " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;

  const json dj = j.value("dataset", json::object());
  cfg.dataset.system.kind =
      system_kind_from(get_or<std::string>(dj, "system", "lds"));
  cfg.dataset.system.latent_dim = get_or<std::size_t>(dj, "d", 3);
  cfg.dataset.system.sigma_eps = get_or<real>(dj, "sigma", 0.01);
  cfg.dataset.system.angle_deg = get_or<real>(dj, "angle", 5.0);
  cfg.dataset.system.angles_uniform = get_or<bool>(dj, "angles_uniform", false);
  cfg.dataset.system.num_modes = get_or<std::size_t>(dj, "modes", 5);
  cfg.dataset.system.switch_prob = get_or<double>(dj, "switch_prob", 1e-4);
  cfg.dataset.system.dt = get_or<real>(dj, "dt", 0.01);
  cfg.dataset.system.trials = get_or<std::size_t>(dj, "trials", 100);
  cfg.dataset.system.trial_len = get_or<std::size_t>(dj, "trial_len", 1000);
  cfg.dataset.system.control =
      control_kind_from(get_or<std::string>(dj, "control", "none"));
  cfg.dataset.system.control_dim = get_or<std::size_t>(dj, "control_dim", 1);
  cfg.dataset.system.control_b_mean = get_or<real>(dj, "control_b_mean", 0.01);
  cfg.dataset.system.control_b_std = get_or<real>(dj, "control_b_std", 0.1);
  cfg.dataset.system.vmf_kappa = get_or<real>(dj, "vmf_kappa", 0.0);
  cfg.dataset.system.vmf_kappa_pos = get_or<real>(dj, "vmf_kappa_pos", 10.0);
  cfg.dataset.obs_dim = get_or<std::size_t>(dj, "obs_dim", 50);
  cfg.dataset.mixing_layers = get_or<std::size_t>(dj, "mixing_layers", 4);
  cfg.dataset.cond_threshold = get_or<real>(dj, "cond_threshold", 6.0);
  cfg.dataset.low_rank = get_or<bool>(dj, "low_rank", false);
  cfg.dataset.rank = get_or<std::size_t>(dj, "rank", 2);
  cfg.dataset.low_rank_inner_layers =
      get_or<std::size_t>(dj, "low_rank_inner_layers", 0);
  cfg.dataset.lag_k = get_or<std::size_t>(dj, "lag_k", 1);
  cfg.dataset.lag_tau = get_or<std::size_t>(dj, "lag_tau", 0);

  const json mj = j.value("model", json::object());
  cfg.model.dynamics =
      dynamics_kind_from(get_or<std::string>(mj, "dynamics", "linear"));
  cfg.model.num_modes = get_or<std::size_t>(mj, "modes", 1);
  cfg.model.gumbel_tau = get_or<real>(mj, "gumbel_tau", 1.0);
  cfg.model.bank_bias = get_or<bool>(mj, "bank_bias", false);
  cfg.model.logit_guard = get_or<real>(mj, "logit_guard", 1e-8);
  cfg.model.similarity =
      similarity_from(get_or<std::string>(mj, "similarity", "neg_sq_euclidean"));
  cfg.model.kde = get_or<bool>(mj, "kde", false);
  cfg.model.kde_epsilon = get_or<real>(mj, "kde_epsilon", 1.0);
  cfg.model.kde_kappa = get_or<real>(mj, "kde_kappa", 20.0);
  cfg.model.asymmetric = get_or<bool>(mj, "asymmetric", false);
  cfg.model.use_control = get_or<bool>(mj, "control", false);
  cfg.model.hidden = get_or<std::vector<std::size_t>>(mj, "hidden", {});
  cfg.model.posthoc = get_or<std::string>(mj, "posthoc", "auto");
  if (cfg.model.posthoc != "auto" && cfg.model.posthoc != "none" &&
      cfg.model.posthoc != "linear" && cfg.model.posthoc != "grad_slds")
    throw std::invalid_argument("model.posthoc: unknown kind '" +
                                cfg.model.posthoc + "'");
  cfg.model.posthoc_modes = get_or<std::size_t>(mj, "posthoc_modes", 0);
  cfg.model.posthoc_steps = get_or<long>(mj, "posthoc_steps", 2000);
  cfg.model.posthoc_lr = get_or<real>(mj, "posthoc_lr", 1e-2);

  const json tj = j.value("train", json::object());
  cfg.train.steps = get_or<long>(tj, "steps", 5000);
  cfg.train.lr_encoder = get_or<real>(tj, "lr", 3e-4);
  cfg.train.lr_dynamics = get_or<real>(tj, "lr_dynamics", 1e-2);
  cfg.train.batch.batch_size = get_or<std::size_t>(tj, "batch_size", 512);
  cfg.train.batch.num_negatives = get_or<std::size_t>(tj, "negatives", 4096);
  cfg.train.batch.pos_offset = get_or<std::size_t>(tj, "offset", 1);
  cfg.train.adam.beta1 = get_or<real>(tj, "beta1", 0.9);
  cfg.train.adam.beta2 = get_or<real>(tj, "beta2", 0.999);
  cfg.train.adam.eps = get_or<real>(tj, "adam_eps", 1e-8);
  cfg.train.kde_enabled = cfg.model.kde;
  cfg.train.kde_epsilon = cfg.model.kde_epsilon;
  cfg.train.kde_kappa = cfg.model.kde_kappa;

  const json ej = j.value("eval", json::object());
  cfg.eval.n_steps = get_or<std::vector<int>>(ej, "n_steps", {1});
  cfg.eval.identity_variant = get_or<bool>(ej, "identity_variant", false);

  const json sj = j.value("seeds", json::object());
  cfg.dataset_seeds =
      get_or<std::vector<std::uint64_t>>(sj, "dataset", {1});
  cfg.model_seeds = get_or<std::vector<std::uint64_t>>(sj, "model", {1});
  if (cfg.dataset_seeds.empty() || cfg.model_seeds.empty())
    throw std::invalid_argument("seeds: lists must be nonempty");

  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["dataset"] = {
      {"system", system_kind_name(cfg.dataset.system.kind)},
      {"d", cfg.dataset.system.latent_dim},
      {"sigma", cfg.dataset.system.sigma_eps},
      {"angle", cfg.dataset.system.angle_deg},
      {"angles_uniform", cfg.dataset.system.angles_uniform},
      {"modes", cfg.dataset.system.num_modes},
      {"switch_prob", cfg.dataset.system.switch_prob},
      {"dt", cfg.dataset.system.dt},
      {"trials", cfg.dataset.system.trials},
      {"trial_len", cfg.dataset.system.trial_len},
      {"control", control_kind_name(cfg.dataset.system.control)},
      {"control_dim", cfg.dataset.system.control_dim},
      {"control_b_mean", cfg.dataset.system.control_b_mean},
      {"control_b_std", cfg.dataset.system.control_b_std},
      {"vmf_kappa", cfg.dataset.system.vmf_kappa},
      {"vmf_kappa_pos", cfg.dataset.system.vmf_kappa_pos},
      {"obs_dim", cfg.dataset.obs_dim},
      {"mixing_layers", cfg.dataset.mixing_layers},
      {"cond_threshold", cfg.dataset.cond_threshold},
      {"low_rank", cfg.dataset.low_rank},
      {"rank", cfg.dataset.rank},
      {"low_rank_inner_layers", cfg.dataset.low_rank_inner_layers},
      {"lag_k", cfg.dataset.lag_k},
      {"lag_tau", cfg.dataset.lag_tau},
  };
  j["model"] = {
      {"dynamics", dynamics_kind_name(cfg.model.dynamics)},
      {"modes", cfg.model.num_modes},
      {"gumbel_tau", cfg.model.gumbel_tau},
      {"bank_bias", cfg.model.bank_bias},
      {"logit_guard", cfg.model.logit_guard},
      {"similarity", cfg.model.similarity == SimilarityKind::dot_product
                         ? "dot_product"
                         : "neg_sq_euclidean"},
      {"kde", cfg.model.kde},
      {"kde_epsilon", cfg.model.kde_epsilon},
      {"kde_kappa", cfg.model.kde_kappa},
      {"asymmetric", cfg.model.asymmetric},
      {"control", cfg.model.use_control},
      {"hidden", cfg.model.hidden},
      {"posthoc", cfg.model.posthoc},
      {"posthoc_modes", cfg.model.posthoc_modes},
      {"posthoc_steps", cfg.model.posthoc_steps},
      {"posthoc_lr", cfg.model.posthoc_lr},
  };
  j["train"] = {
      {"steps", cfg.train.steps},
      {"lr", cfg.train.lr_encoder},
      {"lr_dynamics", cfg.train.lr_dynamics},
      {"batch_size", cfg.train.batch.batch_size},
      {"negatives", cfg.train.batch.num_negatives},
      {"offset", cfg.train.batch.pos_offset},
      {"beta1", cfg.train.adam.beta1},
      {"beta2", cfg.train.adam.beta2},
      {"adam_eps", cfg.train.adam.eps},
  };
  j["eval"] = {
      {"n_steps", cfg.eval.n_steps},
      {"identity_variant", cfg.eval.identity_variant},
  };
  j["seeds"] = {{"dataset", cfg.dataset_seeds}, {"model", cfg.model_seeds}};
  return j;
}

std::string config_hash(const json& j) {
  // nlohmann objects are key-sorted, so dump() is canonical.
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override must look like key.path=value: " +
                                assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // plain string
  }

  json* cursor = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty())
      throw std::invalid_argument("override has an empty path segment: " + path);
    if (dot == std::string::npos) {
      (*cursor)[key] = value;
      return;
    }
    cursor = &(*cursor)[key];
    start = dot + 1;
  }
}

ExperimentConfig load_config_file(const std::filesystem::path& path,
                                  const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in)
    throw std::invalid_argument("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config parse error in " + path.string() +
                                ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

}  // namespace dcl
