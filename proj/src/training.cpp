#include "dcl/training.hpp"

#include <cmath>
#include <stdexcept>

namespace dcl {

// ---- batches ---------------------------------------------------------------

BatchSampler::BatchSampler(const TrajectoryDataset& ds, BatchSpec spec)
    : spec_(spec), total_steps_(ds.num_steps()) {
  if (spec_.pos_offset == 0)
    throw std::invalid_argument("batch: positive offset must be >= 1");
  if (spec_.pos_offset >= ds.min_trial_len())
    throw std::invalid_argument(
        "batch: positive offset >= shortest trial length");
  for (const auto& [s, e] : ds.trial_bounds) {
    for (std::size_t t = s; t + spec_.pos_offset < e; ++t)
      valid_refs_.push_back(t);
  }
  if (valid_refs_.empty())
    throw std::invalid_argument("batch: no valid reference positions");
}

Batch BatchSampler::sample(Rng& rng) const {
  Batch b;
  b.refs.resize(spec_.batch_size);
  b.positives.resize(spec_.batch_size);
  b.negatives.resize(spec_.num_negatives);
  for (std::size_t i = 0; i < spec_.batch_size; ++i) {
    std::size_t r = valid_refs_[rng.uniform_index(valid_refs_.size())];
    b.refs[i] = r;
    b.positives[i] = r + spec_.pos_offset;
  }
  for (std::size_t i = 0; i < spec_.num_negatives; ++i)
    b.negatives[i] = rng.uniform_index(total_steps_);
  return b;
}

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> idx) {
  Tensor out({idx.size(), source.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < source.cols(); ++j)
      out.at(i, j) = source.at(idx[i], j);
  return out;
}

// ---- InfoNCE ----------------------------------------------------------------

real infonce_loss_from_scores(const Tensor& pos_scores,
                              const Tensor& neg_scores) {
  if (pos_scores.rank() != 1 || neg_scores.rank() != 2 ||
      neg_scores.rows() != pos_scores.size())
    throw std::invalid_argument("infonce: score shape mismatch");
  const std::size_t n = pos_scores.size(), m = neg_scores.cols();
  real loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    real mx = pos_scores[i];
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, neg_scores.at(i, j));
    real z = std::exp(pos_scores[i] - mx);
    for (std::size_t j = 0; j < m; ++j) z += std::exp(neg_scores.at(i, j) - mx);
    loss += -pos_scores[i] + mx + std::log(z);
  }
  return loss / static_cast<real>(n);
}

StepGraph build_step_graph(Tape& tape, ModelBundle& model,
                           const KdeCorrection& kde, const Tensor& y_ref,
                           const Tensor& y_pos, const Tensor& y_neg,
                           const Tensor* control_ref,
                           std::span<const int> oracle_modes, Rng* gumbel_rng) {
  Var yr = tape.constant(y_ref);
  Var yp = tape.constant(y_pos);
  Var yn = tape.constant(y_neg);

  Encoder& cand_encoder =
      model.encoder_positive ? *model.encoder_positive : model.encoder;
  Var xr = model.encoder.forward(tape, yr);
  Var xp = cand_encoder.forward(tape, yp);
  Var xn = cand_encoder.forward(tape, yn);

  DynamicsModel::Forward fwd = model.dynamics.forward_train(
      tape, xr, xp, control_ref, oracle_modes, gumbel_rng);

  Var pos, neg;
  if (model.similarity == SimilarityKind::neg_sq_euclidean) {
    pos = ops::scale(ops::sqdist_rows(fwd.prediction, xp), -1);
    neg = ops::scale(ops::sqdist_matrix(fwd.prediction, xn), -1);
  } else {
    pos = ops::dot_rows(fwd.prediction, xp);
    neg = ops::dot_matrix(fwd.prediction, xn);
  }

  if (kde.enabled) {
    // Anchors: the current negative embeddings, detached.
    KdeCorrection local = kde;
    local.anchors = tape.value(xn);
    Var alpha_pos = local.log_density(tape, xp, model.similarity);
    Var alpha_neg = local.log_density(tape, xn, model.similarity);
    pos = ops::sub(pos, alpha_pos);
    neg = ops::add_rowvec(neg, ops::scale(alpha_neg, -1));
  }

  Var lse = ops::logsumexp_rows_with(neg, pos);
  StepGraph g;
  g.loss = ops::mean_all(ops::sub(lse, pos));
  g.pos_scores = pos;
  g.neg_scores = neg;
  g.z = fwd.z;
  return g;
}

// ---- training loop -----------------------------------------------------------

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("train: steps must be >= 0");
  if (lr_encoder <= 0 || lr_dynamics <= 0)
    throw std::invalid_argument("train: learning rates must be positive");
  if (batch.batch_size == 0)
    throw std::invalid_argument("train: batch size must be >= 1");
}

TrainResult train(const TrajectoryDataset& ds, ModelBundle& model,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (ds.observations.size() == 0)
    throw std::invalid_argument("train: dataset has no observations");
  if (model.dynamics.config().kind == DynamicsKind::oracle &&
      model.dynamics.frozen().slds && !ds.has_modes())
    throw std::invalid_argument("train: oracle slds needs dataset modes");

  BatchSampler sampler(ds, cfg.batch);
  Rng rng(cfg.seed);
  Rng batch_rng = rng.stream("batch");
  Rng gumbel_rng = rng.stream("gumbel");

  AdamConfig enc_adam = cfg.adam;
  enc_adam.lr = cfg.lr_encoder;
  AdamConfig dyn_adam = cfg.adam;
  dyn_adam.lr = cfg.lr_dynamics;

  std::vector<Parameter*> enc_params = model.encoder.parameters();
  if (model.encoder_positive) {
    for (Parameter* p : model.encoder_positive->parameters())
      enc_params.push_back(p);
  }
  AdamGroup enc_group(enc_params, enc_adam);
  AdamGroup dyn_group(model.dynamics.parameters(), dyn_adam);

  KdeCorrection kde;
  kde.enabled = cfg.kde_enabled;
  kde.epsilon = cfg.kde_epsilon;
  kde.kappa = cfg.kde_kappa;

  const real divergence_bound =
      10 * std::log(static_cast<real>(cfg.batch.num_negatives + 1));

  TrainResult result;
  result.loss_trace.reserve(cfg.steps);
  const bool needs_gumbel =
      model.dynamics.config().kind == DynamicsKind::grad_slds;
  const bool oracle_slds = model.dynamics.config().kind == DynamicsKind::oracle &&
                           model.dynamics.frozen().slds.has_value();

  std::vector<int> batch_modes;
  for (long step = 0; step < cfg.steps; ++step) {
    Batch batch = sampler.sample(batch_rng);
    Tensor y_ref = gather_rows(ds.observations, batch.refs);
    Tensor y_pos = gather_rows(ds.observations, batch.positives);
    Tensor y_neg = gather_rows(ds.observations, batch.negatives);

    Tensor control_ref;
    const Tensor* control_ptr = nullptr;
    if (ds.has_control() && (model.dynamics.config().use_control ||
                             model.dynamics.frozen().lds)) {
      control_ref = gather_rows(ds.control, batch.refs);
      control_ptr = &control_ref;
    }
    if (oracle_slds) {
      batch_modes.resize(batch.refs.size());
      for (std::size_t i = 0; i < batch.refs.size(); ++i)
        batch_modes[i] = ds.modes[batch.refs[i]];
    }

    Tape tape;
    StepGraph g = build_step_graph(tape, model, kde, y_ref, y_pos, y_neg,
                                   control_ptr, batch_modes,
                                   needs_gumbel ? &gumbel_rng : nullptr);
    const real loss = tape.value(g.loss)[0];
    if (!std::isfinite(loss))
      throw DivergenceError("training loss is not finite", step);
    if (cfg.batch.num_negatives > 0 && loss > divergence_bound)
      throw DivergenceError("training loss exceeded divergence bound", step);
    result.loss_trace.push_back(loss);

    tape.backward(g.loss);
    if (cfg.train_encoder) enc_group.step(tape);
    if (cfg.train_dynamics && !dyn_group.empty()) dyn_group.step(tape);
  }
  return result;
}

// ---- post-hoc fitting ------------------------------------------------------------

DynamicsModel posthoc_fit_dynamics(
    const Tensor& xhat,
    const std::vector<std::pair<std::size_t, std::size_t>>& trial_bounds,
    const Tensor* control, DynamicsConfig dyn_cfg, const PosthocConfig& cfg) {
  Rng rng(cfg.seed);
  Rng init_rng = rng.stream("init");
  Rng batch_rng = rng.stream("batch");
  Rng gumbel_rng = rng.stream("gumbel");

  dyn_cfg.latent_dim = xhat.cols();
  DynamicsModel dyn = DynamicsModel::create(dyn_cfg, init_rng);

  std::vector<std::size_t> pairs;
  for (const auto& [s, e] : trial_bounds)
    for (std::size_t t = s; t + 1 < e; ++t) pairs.push_back(t);
  if (pairs.empty())
    throw std::invalid_argument("posthoc fit: no in-trial successor pairs");

  AdamConfig adam;
  adam.lr = cfg.lr;
  AdamGroup group(dyn.parameters(), adam);
  const bool needs_gumbel = dyn_cfg.kind == DynamicsKind::grad_slds;

  std::vector<std::size_t> idx;
  for (long step = 0; step < cfg.steps; ++step) {
    if (cfg.batch_size == 0 || cfg.batch_size >= pairs.size()) {
      idx = pairs;
    } else {
      idx.resize(cfg.batch_size);
      for (auto& v : idx) v = pairs[batch_rng.uniform_index(pairs.size())];
    }
    std::vector<std::size_t> next(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) next[i] = idx[i] + 1;

    Tensor x_t = gather_rows(xhat, idx);
    Tensor x_next = gather_rows(xhat, next);
    Tensor u;
    const Tensor* u_ptr = nullptr;
    if (control && dyn_cfg.use_control) {
      u = gather_rows(*control, idx);
      u_ptr = &u;
    }

    Tape tape;
    Var xt = tape.constant(std::move(x_t));
    Var xn = tape.constant(std::move(x_next));
    DynamicsModel::Forward fwd = dyn.forward_train(
        tape, xt, xn, u_ptr, {}, needs_gumbel ? &gumbel_rng : nullptr);
    Var loss = ops::mean_all(ops::sqdist_rows(fwd.prediction, xn));
    const real value = tape.value(loss)[0];
    if (!std::isfinite(value))
      throw DivergenceError("posthoc fit diverged", step);
    tape.backward(loss);
    group.step(tape);
  }
  return dyn;
}

}  // namespace dcl
