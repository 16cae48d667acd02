#include "dcl/experiment.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>

namespace dcl {

using nlohmann::json;

PreparedData prepare_dataset(const DatasetBlock& block, std::uint64_t seed) {
  PreparedData out;
  GeneratedSystem gen = generate_latents(block.system, seed);
  out.system = std::move(gen);
  out.data = std::move(out.system.dataset);
  out.system.dataset = TrajectoryDataset{};  // latents live in out.data

  Rng base(seed);
  Rng mix_rng = base.stream("mixing");
  const std::size_t d = out.data.latent_dim();
  if (block.low_rank) {
    LowRankMixing g = build_low_rank_mixing(d, block.obs_dim, block.rank,
                                            block.low_rank_inner_layers, mix_rng,
                                            block.cond_threshold);
    out.data.observations = apply_mixing(g, out.data.latents);
  } else {
    MixingMlp g = build_mixing_mlp(d, block.obs_dim, block.mixing_layers,
                                   mix_rng, block.cond_threshold);
    out.data.observations = apply_mixing(g, out.data.latents);
  }
  out.data.validate();

  if (block.lag_k > 1 || block.lag_tau > 0) {
    TimeLagConfig lag = make_equidistant_lags(block.lag_k, block.lag_tau);
    out.view = time_lag_embed_dataset(out.data, lag);
  } else {
    out.view = out.data;
  }
  return out;
}

PreparedData make_view(GeneratedSystem system, TrajectoryDataset data,
                       const DatasetBlock& block) {
  PreparedData out;
  out.system = std::move(system);
  out.data = std::move(data);
  if (block.lag_k > 1 || block.lag_tau > 0) {
    TimeLagConfig lag = make_equidistant_lags(block.lag_k, block.lag_tau);
    out.view = time_lag_embed_dataset(out.data, lag);
  } else {
    out.view = out.data;
  }
  return out;
}

ModelBundle build_model(const ExperimentConfig& cfg, const PreparedData& data,
                        std::uint64_t model_seed) {
  Rng base(model_seed);
  Rng enc_rng = base.stream("encoder_init");
  Rng dyn_rng = base.stream("dynamics_init");

  const std::size_t d = data.view.latent_dim();

  ModelBundle model;
  model.similarity = cfg.model.similarity;

  EncoderConfig ec;
  ec.input_dim = data.view.observations.cols();
  ec.latent_dim = d;
  ec.hidden = cfg.model.hidden;
  ec.unit_sphere = cfg.model.similarity == SimilarityKind::dot_product;
  model.encoder = Encoder(ec, enc_rng);
  if (cfg.model.asymmetric) {
    Rng enc2_rng = base.stream("encoder2_init");
    model.encoder_positive = Encoder(ec, enc2_rng);
  }

  DynamicsConfig dc;
  dc.kind = cfg.model.dynamics;
  dc.latent_dim = d;
  dc.num_modes = cfg.model.num_modes > 0 ? cfg.model.num_modes
                                         : data.system.slds
                                               ? data.system.slds->bank.size()
                                               : 1;
  dc.gumbel_tau = cfg.model.gumbel_tau;
  dc.bank_bias = cfg.model.bank_bias;
  dc.logit_guard = cfg.model.logit_guard;
  dc.use_control = cfg.model.use_control;
  dc.control_dim = data.view.has_control() ? data.view.control.cols() : 0;
  if (dc.use_control && dc.control_dim == 0)
    throw std::invalid_argument("model.control set but dataset has no control");

  if (cfg.model.dynamics == DynamicsKind::oracle) {
    OracleDynamics frozen;
    frozen.lds = data.system.lds;
    frozen.slds = data.system.slds;
    frozen.lorenz = data.system.lorenz;
    dc.use_control = false;  // the oracle keeps the true B
    model.dynamics = DynamicsModel::create_oracle(dc, std::move(frozen));
  } else {
    model.dynamics = DynamicsModel::create(dc, dyn_rng);
  }
  return model;
}

void fit_posthoc_dynamics(const ExperimentConfig& cfg, const PreparedData& data,
                          ModelBundle& model, std::uint64_t model_seed) {
  if (cfg.model.dynamics != DynamicsKind::identity) return;
  if (cfg.model.posthoc == "none") return;

  DynamicsConfig pc;
  if (cfg.model.posthoc == "grad_slds" ||
      (cfg.model.posthoc == "auto" && data.system.slds)) {
    pc.kind = DynamicsKind::grad_slds;
    pc.num_modes = cfg.model.posthoc_modes > 0 ? cfg.model.posthoc_modes
                   : data.system.slds ? data.system.slds->bank.size()
                                      : cfg.model.num_modes;
    pc.gumbel_tau = cfg.model.gumbel_tau;
    pc.bank_bias = cfg.model.bank_bias;
  } else {
    pc.kind = DynamicsKind::linear;
  }
  pc.use_control = data.view.has_control();
  pc.control_dim = pc.use_control ? data.view.control.cols() : 0;

  Encoder& h = model.encoder_positive ? *model.encoder_positive : model.encoder;
  Tensor xhat = h.forward_eval(data.view.observations);

  PosthocConfig fit;
  fit.steps = cfg.model.posthoc_steps;
  fit.lr = cfg.model.posthoc_lr;
  fit.seed = model_seed ^ 0x9e3779b97f4a7c15ULL;
  model.posthoc = posthoc_fit_dynamics(
      xhat, data.view.trial_bounds,
      data.view.has_control() ? &data.view.control : nullptr, pc, fit);
}

MetricsReport evaluate_model(const ExperimentConfig& cfg,
                             const PreparedData& data, ModelBundle& model) {
  const TrajectoryDataset& ds = data.view;
  Encoder& h = model.encoder_positive ? *model.encoder_positive : model.encoder;
  Tensor xhat = h.forward_eval(ds.observations);
  xhat.require_finite("encoded latents");

  AlignmentResult align = fit_alignment(ds.latents, xhat);

  MetricsReport rep;
  rep.r2_latent = r2_latent(ds.latents, xhat, align);
  rep.mcc = mcc(ds.latents, xhat);

  DynamicsModel& md = model.metric_dynamics();

  const bool model_linear =
      md.config().kind == DynamicsKind::linear ||
      (md.config().kind == DynamicsKind::oracle && md.frozen().lds);
  if (data.system.lds && model_linear)
    rep.lds_error = lds_error(data.system.lds->A, md.linear_matrix(), align);

  const bool system_has_dynamics =
      data.system.lds || data.system.slds || data.system.lorenz;
  if (system_has_dynamics) {
    for (int n : cfg.eval.n_steps) {
      DynR2Options opt;
      opt.n_steps = n;
      real value = dyn_r2(data.system, ds, md, xhat, align, opt);
      if (n == 1)
        rep.dyn_r2 = value;
      else
        rep.variants["dyn_r2_n" + std::to_string(n)] = value;
      if (cfg.eval.identity_variant) {
        opt.identity_dynamics = true;
        rep.variants["dyn_r2_identity_n" + std::to_string(n)] =
            dyn_r2(data.system, ds, md, xhat, align, opt);
      }
    }
  }

  if (ds.has_modes() && md.is_switching()) {
    std::vector<int> predicted = md.infer_modes(xhat, ds.trial_bounds);
    const int k = static_cast<int>(
        std::max<std::size_t>(md.config().num_modes,
                              data.system.slds ? data.system.slds->bank.size() : 1));
    rep.cluster_accuracy = cluster_accuracy(ds.modes, predicted, k);
  }
  return rep;
}

RunRecord run_single(const ExperimentConfig& cfg, const PreparedData& data,
                     std::uint64_t model_seed) {
  RunRecord rec;
  rec.dataset_seed = data.data.seed;
  rec.model_seed = model_seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    ModelBundle model = build_model(cfg, data, model_seed);
    TrainConfig tc = cfg.train;
    tc.seed = model_seed;
    TrainResult tr = train(data.view, model, tc);
    rec.steps = static_cast<long>(tr.loss_trace.size());
    if (!tr.loss_trace.empty()) {
      rec.first_loss = tr.loss_trace.front();
      rec.final_loss = tr.loss_trace.back();
      rec.min_loss = *std::min_element(tr.loss_trace.begin(), tr.loss_trace.end());
    }
    fit_posthoc_dynamics(cfg, data, model, model_seed);
    rec.metrics = evaluate_model(cfg, data, model);
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rec;
}

json metrics_to_json(const MetricsReport& m) {
  json j = json::object();
  if (m.r2_latent) j["r2_latent"] = *m.r2_latent;
  if (m.lds_error) j["lds_error"] = *m.lds_error;
  if (m.dyn_r2) j["dyn_r2"] = *m.dyn_r2;
  if (m.cluster_accuracy) j["cluster_accuracy"] = *m.cluster_accuracy;
  if (m.mcc) j["mcc"] = *m.mcc;
  for (const auto& [k, v] : m.variants) j[k] = v;
  return j;
}

json run_record_to_json(const std::string& cfg_hash, const RunRecord& r) {
  json j;
  j["config_hash"] = cfg_hash;
  j["dataset_seed"] = r.dataset_seed;
  j["model_seed"] = r.model_seed;
  j["metrics"] = metrics_to_json(r.metrics);
  j["loss"] = {{"first", r.first_loss}, {"final", r.final_loss},
               {"min", r.min_loss}, {"steps", r.steps}};
  j["wall_sec"] = r.wall_seconds;
  j["version"] = kVersionTag;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

void append_jsonl(const std::filesystem::path& path, const json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  out << j.dump() << "\n";
}

// ---- ground-truth persistence ------------------------------------------------

void save_generated(const std::filesystem::path& dir, const GeneratedSystem& g,
                    const std::string& config_json) {
  json sys;
  if (g.lds) {
    sys["kind"] = "lds";
    io::write_array_f64(dir / "system.A.bin", g.lds->A);
    sys["A_shape"] = g.lds->A.shape();
    if (g.lds->B) {
      io::write_array_f64(dir / "system.B.bin", *g.lds->B);
      sys["B_shape"] = g.lds->B->shape();
    }
    sys["angles"] = g.lds->plane_angles_deg;
  } else if (g.slds) {
    sys["kind"] = "slds";
    const std::size_t k = g.slds->bank.size(), d = g.slds->bank[0].rows();
    Tensor stacked({k * d, d});
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          stacked.at(kk * d + i, j) = g.slds->bank[kk].at(i, j);
    io::write_array_f64(dir / "system.bank.bin", stacked);
    sys["modes"] = k;
    sys["d"] = d;
    io::write_array_f64(dir / "system.transition.bin", g.slds->transition);
    sys["prior"] = g.slds->prior;
  } else if (g.lorenz) {
    sys["kind"] = "lorenz";
    sys["lorenz"] = {{"sigma", g.lorenz->sigma_l},
                     {"rho", g.lorenz->rho},
                     {"beta", g.lorenz->beta},
                     {"dt", g.lorenz->dt}};
  } else {
    sys["kind"] = "none";
  }
  std::ofstream out(dir / "system.json");
  out << sys.dump(2) << "\n";
  if (!config_json.empty()) {
    std::ofstream cfg(dir / "config.json");
    cfg << config_json << "\n";
  }
}

GeneratedSystem load_generated(const std::filesystem::path& dir) {
  GeneratedSystem g;
  std::ifstream in(dir / "system.json");
  if (!in) throw std::runtime_error("missing system.json in " + dir.string());
  json sys = json::parse(in);
  const std::string kind = sys.at("kind").get<std::string>();
  if (kind == "lds") {
    LdsParams p;
    auto shape = sys.at("A_shape").get<std::vector<std::size_t>>();
    p.A = io::read_array_f64(dir / "system.A.bin", shape);
    if (sys.contains("B_shape")) {
      auto bshape = sys.at("B_shape").get<std::vector<std::size_t>>();
      p.B = io::read_array_f64(dir / "system.B.bin", bshape);
    }
    p.plane_angles_deg = sys.value("angles", std::vector<real>{});
    g.lds = std::move(p);
  } else if (kind == "slds") {
    const std::size_t k = sys.at("modes").get<std::size_t>();
    const std::size_t d = sys.at("d").get<std::size_t>();
    Tensor stacked = io::read_array_f64(dir / "system.bank.bin", {k * d, d});
    SldsParams p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      Tensor m({d, d});
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m.at(i, j) = stacked.at(kk * d + i, j);
      p.bank.push_back(std::move(m));
    }
    p.transition = io::read_array_f64(dir / "system.transition.bin", {k, k});
    p.prior = sys.at("prior").get<std::vector<double>>();
    g.slds = std::move(p);
  } else if (kind == "lorenz") {
    LorenzParams p;
    const json& lj = sys.at("lorenz");
    p.sigma_l = lj.at("sigma").get<real>();
    p.rho = lj.at("rho").get<real>();
    p.beta = lj.at("beta").get<real>();
    p.dt = lj.at("dt").get<real>();
    g.lorenz = p;
  }
  return g;
}

std::filesystem::path results_root() {
  if (const char* env = std::getenv("DCL_RESULTS_ROOT")) return env;
  return "results";
}

}  // namespace dcl
